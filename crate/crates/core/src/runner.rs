//! Runs one detector method over single trajectories or whole corpora.

use rayon::prelude::*;

use crate::detection::{Detection, Method, Scope};
use crate::error::{Error, Result};
use crate::graph_views::{build_call_stack, build_dag};
use crate::hybrid::{detect_hybrid, HybridParams};
use crate::semantic::{check_phi, detect_cdsa, EmbeddingProvider};
use crate::structural::{detect_cdcs, detect_cddag, DEFAULT_MAX_LEN, MIN_SUBSEQUENCE_LEN};
use crate::trace_model::Trajectory;

pub const DEFAULT_M: f64 = 1.4;
pub const DEFAULT_K: f64 = 0.5;
pub const DEFAULT_PHI_CDSA: f64 = 0.85;
pub const DEFAULT_PHI_HYBRID: f64 = 0.83;

/// Every tunable a method may read; each method ignores the ones it does not use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub m: f64,
    pub k: f64,
    pub phi: f64,
    pub max_len: usize,
    pub scope: Scope,
}

impl DetectorConfig {
    pub fn defaults_for(method: Method) -> Self {
        DetectorConfig {
            m: DEFAULT_M,
            k: DEFAULT_K,
            phi: if method == Method::Hybrid {
                DEFAULT_PHI_HYBRID
            } else {
                DEFAULT_PHI_CDSA
            },
            max_len: DEFAULT_MAX_LEN,
            scope: Scope::Full,
        }
    }

    pub fn hybrid_params(&self) -> HybridParams {
        HybridParams {
            k: self.k,
            phi: self.phi,
            max_len: self.max_len,
            scope: self.scope,
        }
    }

    /// Checks the parameters `method` uses.
    pub fn validate(&self, method: Method) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Param(format!("{name} must be > 0, got {v}")))
            }
        };
        match method {
            Method::Cddag => positive("m", self.m),
            Method::Cdcs | Method::Hybrid => {
                positive("k", self.k)?;
                if self.max_len < MIN_SUBSEQUENCE_LEN {
                    return Err(Error::Param(format!(
                        "max_len must be >= {MIN_SUBSEQUENCE_LEN}, got {}",
                        self.max_len
                    )));
                }
                if method == Method::Hybrid {
                    check_phi(self.phi)?;
                }
                Ok(())
            }
            Method::Cdsa => check_phi(self.phi),
        }
    }
}

pub fn detect(
    method: Method,
    t: &Trajectory,
    cfg: &DetectorConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Detection> {
    match method {
        Method::Cddag => detect_cddag(&build_dag(t), cfg.m),
        Method::Cdcs => detect_cdcs(&build_call_stack(t), cfg.k, cfg.max_len),
        Method::Cdsa => detect_cdsa(t, cfg.phi, provider),
        Method::Hybrid => detect_hybrid(t, &cfg.hybrid_params(), provider),
    }
}

/// Runs `method` over every trajectory in parallel. Results keep input order.
/// The first failure (in input order) aborts the run and names its trace.
pub fn detect_corpus(
    method: Method,
    corpus: &[Trajectory],
    cfg: &DetectorConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Detection>> {
    cfg.validate(method)?;
    corpus
        .par_iter()
        .map(|t| {
            detect(method, t, cfg, provider).map_err(|e| Error::Trace {
                trace_id: t.trace_id().to_string(),
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::BuiltinEmbedder;

    #[test]
    fn defaults_follow_best_reported_thresholds() {
        let c = DetectorConfig::defaults_for(Method::Cddag);
        assert_eq!((c.m, c.k, c.max_len), (1.4, 0.5, 20));
        assert_eq!(DetectorConfig::defaults_for(Method::Cdsa).phi, 0.85);
        assert_eq!(DetectorConfig::defaults_for(Method::Hybrid).phi, 0.83);
    }

    #[test]
    fn validation_is_per_method() {
        let mut c = DetectorConfig::defaults_for(Method::Cddag);
        c.m = 0.0;
        assert!(c.validate(Method::Cddag).is_err());
        assert!(c.validate(Method::Cdcs).is_ok());
        c.phi = 1.5;
        assert!(c.validate(Method::Cdsa).is_err());
        assert!(c.validate(Method::Hybrid).is_err());
        let err = detect_corpus(Method::Cddag, &[], &c, &BuiltinEmbedder::default()).unwrap_err();
        assert!(err.is_config());
    }
}
