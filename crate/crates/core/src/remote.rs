//! HTTP embedding provider.
//!
//! Sends `{"texts": [...]}` to a fixed endpoint and expects
//! `{"vectors": [[...], ...]}` back, one vector per text. Every failure is a
//! [`Error::Provider`].

use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantic::{EmbeddingProvider, EmbeddingVector};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

pub struct RemoteProvider {
    endpoint: String,
    client: reqwest::blocking::Client,
    dimension: OnceLock<usize>,
}

impl RemoteProvider {
    /// `dimension` pins the expected vector length; when `None` it is taken
    /// from the first response and enforced afterwards.
    pub fn new(
        endpoint: impl Into<String>,
        timeout: Duration,
        dimension: Option<usize>,
    ) -> Result<Self> {
        let endpoint = endpoint.into();
        if endpoint.is_empty() {
            return Err(Error::Config("remote provider requires an endpoint".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Provider(e.to_string()))?;
        let cell = OnceLock::new();
        if let Some(d) = dimension {
            let _ = cell.set(d);
        }
        Ok(RemoteProvider {
            endpoint,
            client,
            dimension: cell,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> &str {
        "remote"
    }

    fn dimension(&self) -> usize {
        self.dimension.get().copied().unwrap_or(0)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| Error::Provider("empty response".into()))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let provider_err = |e: reqwest::Error| Error::Provider(format!("{}: {e}", self.endpoint));
        let response: EmbedResponse = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { texts })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(provider_err)?
            .json()
            .map_err(provider_err)?;

        if response.vectors.len() != texts.len() {
            return Err(Error::Provider(format!(
                "{}: expected {} vectors, got {}",
                self.endpoint,
                texts.len(),
                response.vectors.len()
            )));
        }
        let expected = match response.vectors.first() {
            Some(v) => *self.dimension.get_or_init(|| v.len()),
            None => return Ok(Vec::new()),
        };
        response
            .vectors
            .into_iter()
            .map(|v| {
                if v.len() == expected {
                    Ok(EmbeddingVector(v))
                } else {
                    Err(Error::Provider(format!(
                        "{}: expected dimension {expected}, got {}",
                        self.endpoint,
                        v.len()
                    )))
                }
            })
            .collect()
    }
}
