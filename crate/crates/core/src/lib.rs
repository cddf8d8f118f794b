//! Detection of cost-inefficient cycles in agent execution traces.
//!
//! A trajectory (all spans of one trace) is viewed two ways: as a DAG over
//! operation names weighted by parent/child occurrence counts, and as a call
//! stack ordered by start time. Structural detectors look for outlier edge
//! weights ([`structural::detect_cddag`]) and outlier subsequence frequencies
//! ([`structural::detect_cdcs`]). The semantic detector
//! ([`semantic::detect_cdsa`]) compares embedded outputs of sibling spans.
//! [`hybrid::detect_hybrid`] gates the semantic check behind the call-stack one.

pub mod cli;
pub mod config;
pub mod detection;
pub mod error;
pub mod eval;
pub mod generator;
pub mod graph_views;
pub mod hybrid;
pub mod remote;
pub mod runner;
pub mod semantic;
pub mod structural;
pub mod trace_model;

pub use detection::{Detection, DetectorParams, Evidence, Flagged, Method, Scope};
pub use error::{Error, Result};
pub use trace_model::{GroundTruthClass, Span, SpanStatus, Trajectory};
