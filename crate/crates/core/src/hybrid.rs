//! Two-stage detector: call-stack repetition gates, sibling similarity confirms.

use std::collections::HashSet;

use crate::detection::{Detection, DetectorParams, Evidence, Method, Scope};
use crate::error::Result;
use crate::graph_views::build_call_stack;
use crate::semantic::{check_phi, detect_cdsa_on_pairs, sibling_pairs, EmbeddingProvider};
use crate::structural::{detect_cdcs, DEFAULT_MAX_LEN};
use crate::trace_model::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridParams {
    pub k: f64,
    pub phi: f64,
    pub max_len: usize,
    pub scope: Scope,
}

impl Default for HybridParams {
    fn default() -> Self {
        HybridParams {
            k: 0.5,
            phi: 0.83,
            max_len: DEFAULT_MAX_LEN,
            scope: Scope::Full,
        }
    }
}

impl HybridParams {
    fn detector_params(&self) -> DetectorParams {
        DetectorParams {
            k: Some(self.k),
            phi: Some(self.phi),
            max_len: Some(self.max_len),
            scope: Some(self.scope),
            ..Default::default()
        }
    }
}

/// Runs the call-stack detector first; only when it fires are sibling outputs
/// embedded and compared. The label is 1 only if both stages flag.
pub fn detect_hybrid(
    t: &Trajectory,
    p: &HybridParams,
    provider: &dyn EmbeddingProvider,
) -> Result<Detection> {
    check_phi(p.phi)?;
    let gate = detect_cdcs(&build_call_stack(t), p.k, p.max_len)?;
    if !gate.is_cycle() {
        let mut out = Detection::new(Method::Hybrid, Vec::new(), p.detector_params());
        out.stages = vec![gate];
        return Ok(out);
    }

    let mut pairs = sibling_pairs(t);
    if p.scope == Scope::FlaggedOnly {
        let ops: HashSet<&str> = gate
            .evidence
            .iter()
            .flat_map(|f| match &f.item {
                Evidence::Subsequence { ops, .. } => ops.iter().map(String::as_str).collect(),
                _ => Vec::new(),
            })
            .collect();
        pairs.retain(|(l, r)| ops.contains(l.op.as_str()) && ops.contains(r.op.as_str()));
    }
    let confirm = detect_cdsa_on_pairs(pairs, p.phi, provider)?;

    let evidence = if confirm.is_cycle() {
        gate.evidence
            .iter()
            .chain(&confirm.evidence)
            .cloned()
            .collect()
    } else {
        Vec::new()
    };
    let mut out = Detection::new(Method::Hybrid, evidence, p.detector_params());
    out.comparisons = confirm.comparisons;
    out.stages = vec![gate, confirm];
    Ok(out)
}
