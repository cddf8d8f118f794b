//! Detector output shared by every method.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cddag,
    Cdcs,
    Cdsa,
    Hybrid,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cddag, Method::Cdcs, Method::Cdsa, Method::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cddag => "cddag",
            Method::Cdcs => "cdcs",
            Method::Cdsa => "cdsa",
            Method::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Which sibling pairs the hybrid confirmation stage examines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    Full,
    FlaggedOnly,
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "full" => Ok(Scope::Full),
            "flagged_only" => Ok(Scope::FlaggedOnly),
            _ => Err(Error::Config(format!("unknown scope `{s}`"))),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Full => "full",
            Scope::FlaggedOnly => "flagged_only",
        })
    }
}

/// Threshold parameters a detector ran with. Unused ones are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<Scope>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Edge {
        parent: String,
        child: String,
        weight: u64,
    },
    Subsequence {
        ops: Vec<String>,
        frequency: u64,
        /// Span ids covered by each occurrence window.
        occurrences: Vec<Vec<String>>,
    },
    SiblingPair {
        /// `None` when both spans are roots.
        parent_span_id: Option<String>,
        left_span_id: String,
        right_span_id: String,
        similarity: f64,
    },
}

impl Evidence {
    fn sort_key(&self) -> Vec<&str> {
        match self {
            Evidence::Edge { parent, child, .. } => vec![parent, child],
            Evidence::Subsequence { ops, .. } => ops.iter().map(String::as_str).collect(),
            Evidence::SiblingPair {
                parent_span_id,
                left_span_id,
                right_span_id,
                ..
            } => vec![
                parent_span_id.as_deref().unwrap_or(""),
                left_span_id,
                right_span_id,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flagged {
    pub item: Evidence,
    pub score: f64,
    pub threshold: f64,
}

/// A binary verdict with the flagged items that produced it.
///
/// `label` is 1 exactly when `evidence` is non-empty. Hybrid detections keep the
/// per-stage results in `stages`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub label: u8,
    pub method: Method,
    pub evidence: Vec<Flagged>,
    pub params: DetectorParams,
    /// Similarity comparisons performed (semantic stages only).
    #[serde(skip_serializing_if = "is_zero")]
    pub comparisons: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<Detection>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl Detection {
    /// Builds a detection, sorting evidence canonically: score descending, then
    /// lexicographically by item key.
    pub fn new(method: Method, mut evidence: Vec<Flagged>, params: DetectorParams) -> Self {
        evidence.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.item.sort_key().cmp(&b.item.sort_key()))
                .then(Ordering::Equal)
        });
        Detection {
            label: u8::from(!evidence.is_empty()),
            method,
            evidence,
            params,
            comparisons: 0,
            stages: Vec::new(),
        }
    }

    pub fn is_cycle(&self) -> bool {
        self.label == 1
    }
}
