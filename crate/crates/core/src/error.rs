use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record could not be decoded; `field` names the offending key.
    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error in trace `{trace_id}`: {message}")]
    Validation { trace_id: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("embedding provider error: {0}")]
    Provider(String),

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("trace `{trace_id}`: {source}")]
    Trace {
        trace_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(trace_id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            trace_id: trace_id.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user-supplied parameters or config.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Param(_) | Error::Config(_) => true,
            Error::Trace { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
