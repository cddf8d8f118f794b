//! Structural detectors: edge-weight outliers on the operation DAG and
//! frequency outliers among call-stack subsequences.
//!
//! Both use the same rule. Given a multiset of counts with population mean `mu`
//! and population standard deviation `sigma`, an item is flagged when its count
//! is strictly greater than `mu + multiplier * sigma`. With `sigma == 0` nothing
//! can be flagged.

use std::collections::HashMap;

use serde::Serialize;

use crate::detection::{Detection, DetectorParams, Evidence, Flagged, Method};
use crate::error::{Error, Result};
use crate::graph_views::{OpGraph, OpSequence};

/// Shortest subsequence considered a repetition.
pub const MIN_SUBSEQUENCE_LEN: usize = 3;
pub const DEFAULT_MAX_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightStats {
    pub mu: f64,
    pub sigma: f64,
    pub count: usize,
}

impl WeightStats {
    pub fn threshold(&self, multiplier: f64) -> f64 {
        self.mu + multiplier * self.sigma
    }
}

/// Population mean and standard deviation of integer weights.
///
/// Sums are accumulated exactly in 128-bit integers, so `sigma` is exactly zero
/// when all weights are equal.
pub fn weight_stats(weights: &[u64]) -> Result<WeightStats> {
    if weights.is_empty() {
        return Err(Error::Domain(
            "weight_stats requires at least one weight".into(),
        ));
    }
    let n = weights.len() as u128;
    let (sum, sum_sq) = weights.iter().fold((0u128, 0u128), |(s, sq), &w| {
        let w = u128::from(w);
        (s + w, sq + w * w)
    });
    // n^2 * variance = n * sum(w^2) - sum(w)^2 >= 0
    let scaled_var = n * sum_sq - sum * sum;
    let mu = sum as f64 / n as f64;
    let sigma = if scaled_var == 0 {
        0.0
    } else {
        (scaled_var as f64).sqrt() / n as f64
    };
    Ok(WeightStats {
        mu,
        sigma,
        count: weights.len(),
    })
}

fn check_multiplier(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be > 0, got {value}")))
    }
}

/// Flags operation edges whose weight is an outlier among all edge weights.
pub fn detect_cddag(g: &OpGraph, m: f64) -> Result<Detection> {
    check_multiplier("m", m)?;
    let params = DetectorParams {
        m: Some(m),
        ..Default::default()
    };
    let weights = g.weights();
    if weights.is_empty() {
        return Ok(Detection::new(Method::Cddag, Vec::new(), params));
    }
    let threshold = weight_stats(&weights)?.threshold(m);
    let evidence = g
        .edges
        .iter()
        .filter(|(_, &w)| w as f64 > threshold)
        .map(|((parent, child), &w)| Flagged {
            item: Evidence::Edge {
                parent: parent.clone(),
                child: child.clone(),
                weight: w,
            },
            score: w as f64,
            threshold,
        })
        .collect();
    Ok(Detection::new(Method::Cddag, evidence, params))
}

/// Frequencies of every contiguous op subsequence within the window bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyMap {
    pub entries: HashMap<Vec<String>, u64>,
    pub min_len: usize,
    pub max_len: usize,
}

impl FrequencyMap {
    pub fn frequencies(&self) -> Vec<u64> {
        self.entries.values().copied().collect()
    }

    pub fn get<S: AsRef<str>>(&self, ops: &[S]) -> Option<u64> {
        let key: Vec<String> = ops.iter().map(|s| s.as_ref().to_string()).collect();
        self.entries.get(&key).copied()
    }
}

/// Interned window counts: window contents -> start positions.
struct WindowIndex<'a> {
    windows: HashMap<&'a [u32], Vec<usize>>,
}

fn intern(ops: &[String]) -> (Vec<u32>, Vec<&str>) {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut names = Vec::new();
    let seq = ops
        .iter()
        .map(|op| {
            *ids.entry(op.as_str()).or_insert_with(|| {
                names.push(op.as_str());
                (names.len() - 1) as u32
            })
        })
        .collect();
    (seq, names)
}

fn index_windows(seq: &[u32], min_len: usize, max_len: usize) -> WindowIndex<'_> {
    let mut windows: HashMap<&[u32], Vec<usize>> = HashMap::new();
    for len in min_len..=max_len.min(seq.len()) {
        for (start, window) in seq.windows(len).enumerate() {
            windows.entry(window).or_default().push(start);
        }
    }
    WindowIndex { windows }
}

fn check_bounds(min_len: usize, max_len: usize) -> Result<()> {
    if min_len < MIN_SUBSEQUENCE_LEN {
        return Err(Error::Param(format!(
            "min_len must be >= {MIN_SUBSEQUENCE_LEN}, got {min_len}"
        )));
    }
    if max_len < min_len {
        return Err(Error::Param(format!(
            "max_len ({max_len}) must be >= min_len ({min_len})"
        )));
    }
    Ok(())
}

/// Counts every contiguous window of length `min_len..=min(max_len, n)`,
/// overlapping occurrences included.
pub fn enumerate_subsequences(
    c: &OpSequence,
    min_len: usize,
    max_len: usize,
) -> Result<FrequencyMap> {
    check_bounds(min_len, max_len)?;
    let (seq, names) = intern(&c.ops);
    let index = index_windows(&seq, min_len, max_len);
    let entries = index
        .windows
        .into_iter()
        .map(|(window, starts)| {
            let key = window
                .iter()
                .map(|&id| names[id as usize].to_string())
                .collect();
            (key, starts.len() as u64)
        })
        .collect();
    Ok(FrequencyMap {
        entries,
        min_len,
        max_len,
    })
}

/// Window cap actually used for a sequence of length `n`: `max_len`, but never
/// more than `n / 2` (floored at the minimum length).
pub fn effective_max_len(n: usize, max_len: usize) -> usize {
    max_len.min((n / 2).max(MIN_SUBSEQUENCE_LEN))
}

/// Flags op subsequences whose frequency is an outlier among all subsequence
/// frequencies, including those seen once.
pub fn detect_cdcs(c: &OpSequence, k: f64, max_len: usize) -> Result<Detection> {
    check_multiplier("k", k)?;
    check_bounds(MIN_SUBSEQUENCE_LEN, max_len)?;
    let params = DetectorParams {
        k: Some(k),
        max_len: Some(max_len),
        ..Default::default()
    };
    let cap = effective_max_len(c.len(), max_len);
    let (seq, names) = intern(&c.ops);
    let index = index_windows(&seq, MIN_SUBSEQUENCE_LEN, cap);
    if index.windows.is_empty() {
        return Ok(Detection::new(Method::Cdcs, Vec::new(), params));
    }

    let freqs: Vec<u64> = index.windows.values().map(|s| s.len() as u64).collect();
    let threshold = weight_stats(&freqs)?.threshold(k);
    let evidence = index
        .windows
        .iter()
        .filter(|(_, starts)| starts.len() as f64 > threshold)
        .map(|(window, starts)| Flagged {
            item: Evidence::Subsequence {
                ops: window
                    .iter()
                    .map(|&id| names[id as usize].to_string())
                    .collect(),
                frequency: starts.len() as u64,
                occurrences: starts
                    .iter()
                    .map(|&s| c.span_refs[s..s + window.len()].to_vec())
                    .collect(),
            },
            score: starts.len() as f64,
            threshold,
        })
        .collect();
    Ok(Detection::new(Method::Cdcs, evidence, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    const EPS: f64 = 1e-8;

    fn graph(weights: &[u64]) -> OpGraph {
        let mut g = OpGraph::default();
        for (i, &w) in weights.iter().enumerate() {
            g.edges.insert(("p".into(), format!("c{i}")), w);
        }
        g
    }

    #[test]
    fn stats_examples() {
        let s = weight_stats(&[1, 1, 4]).unwrap();
        assert!((s.mu - 2.0).abs() < EPS);
        assert!((s.sigma - 2f64.sqrt()).abs() < EPS);
        assert!((s.sigma - std::f64::consts::SQRT_2).abs() < EPS);

        let s = weight_stats(&[5, 5, 5]).unwrap();
        assert_eq!((s.mu, s.sigma), (5.0, 0.0));

        let s = weight_stats(&[1, 2, 3, 4]).unwrap();
        assert!((s.mu - 2.5).abs() < EPS);
        assert!((s.sigma - 1.11803399).abs() < EPS);

        assert!(matches!(weight_stats(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn cddag_examples() {
        let d = detect_cddag(&graph(&[1, 1, 4]), 1.0).unwrap();
        assert_eq!(d.label, 1);
        assert_eq!(d.evidence.len(), 1);
        assert!((d.evidence[0].threshold - 3.41421356).abs() < EPS);

        let d = detect_cddag(&graph(&[1, 1, 4]), 1.5).unwrap();
        assert_eq!(d.label, 0);

        for m in [0.1, 1.0, 7.0] {
            assert_eq!(detect_cddag(&graph(&[3, 3, 3]), m).unwrap().label, 0);
        }
        assert_eq!(detect_cddag(&OpGraph::default(), 1.0).unwrap().label, 0);
        assert!(matches!(
            detect_cddag(&graph(&[1]), 0.0),
            Err(Error::Param(_))
        ));
        assert!(matches!(
            detect_cddag(&graph(&[1]), -1.0),
            Err(Error::Param(_))
        ));
    }

    /// Brute force: compare every window against every other window.
    fn oracle(ops: &[&str], min_len: usize, max_len: usize) -> BTreeMap<Vec<String>, u64> {
        let mut out = BTreeMap::new();
        for len in min_len..=max_len.min(ops.len()) {
            for i in 0..=ops.len() - len {
                let mut count = 0;
                for j in 0..=ops.len() - len {
                    if (0..len).all(|x| ops[i + x] == ops[j + x]) {
                        count += 1;
                    }
                }
                out.insert(
                    ops[i..i + len].iter().map(|s| s.to_string()).collect(),
                    count,
                );
            }
        }
        out
    }

    #[test]
    fn enumerate_examples() {
        let abc3 = ["A", "B", "C", "A", "B", "C", "A", "B", "C"];
        let f = enumerate_subsequences(&OpSequence::from_ops(abc3), 3, 4).unwrap();
        assert_eq!(f.get(&["A", "B", "C"]), Some(3));
        assert_eq!(f.get(&["B", "C", "A"]), Some(2));
        let sorted: BTreeMap<_, _> = f.entries.clone().into_iter().collect();
        assert_eq!(sorted, oracle(&abc3, 3, 4));

        let f = enumerate_subsequences(&OpSequence::from_ops(["A", "B", "C"]), 3, 3).unwrap();
        assert_eq!(f.entries.len(), 1);
        assert_eq!(f.get(&["A", "B", "C"]), Some(1));

        let f = enumerate_subsequences(&OpSequence::from_ops(["A"; 4]), 3, 3).unwrap();
        assert_eq!(f.get(&["A", "A", "A"]), Some(2));
        assert_eq!(
            oracle(&["A"; 4], 3, 3)
                .values()
                .copied()
                .collect::<Vec<_>>(),
            [2]
        );

        let f = enumerate_subsequences(&OpSequence::from_ops(["A", "B"]), 3, 5).unwrap();
        assert!(f.entries.is_empty());
        assert!(enumerate_subsequences(&OpSequence::from_ops(["A"]), 2, 5).is_err());
        assert!(enumerate_subsequences(&OpSequence::from_ops(["A"]), 4, 3).is_err());
    }

    #[test]
    fn cdcs_examples() {
        let distinct: Vec<String> = (0..12).map(|i| format!("op{i}")).collect();
        let d = detect_cdcs(&OpSequence::from_ops(distinct), 0.5, 20).unwrap();
        assert_eq!(d.label, 0);

        // Oracle: F = {ABC:3, BCA:2, CAB:2, ABCA:2, BCAB:2, CABC:2}
        let abc3 = ["A", "B", "C", "A", "B", "C", "A", "B", "C"];
        let f: Vec<u64> = oracle(&abc3, 3, 4).values().copied().collect();
        let mu = f.iter().sum::<u64>() as f64 / f.len() as f64;
        let sigma =
            (f.iter().map(|&x| (x as f64 - mu).powi(2)).sum::<f64>() / f.len() as f64).sqrt();
        let threshold = mu + 0.5 * sigma;
        assert!((threshold - 2.35300).abs() < 1e-4);

        let d = detect_cdcs(&OpSequence::from_ops(abc3), 0.5, 4).unwrap();
        assert_eq!(d.label, 1);
        assert_eq!(d.evidence.len(), 1);
        assert!((d.evidence[0].threshold - threshold).abs() < 1e-12);
        match &d.evidence[0].item {
            Evidence::Subsequence {
                ops,
                frequency,
                occurrences,
            } => {
                assert_eq!(ops, &["A", "B", "C"]);
                assert_eq!(*frequency, 3);
                assert_eq!(occurrences[1], ["s3", "s4", "s5"]);
            }
            other => panic!("unexpected {other:?}"),
        }

        assert!(matches!(
            detect_cdcs(&OpSequence::from_ops(abc3), 0.0, 4),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn effective_cap() {
        assert_eq!(effective_max_len(9, 4), 4);
        assert_eq!(effective_max_len(100, 20), 20);
        assert_eq!(effective_max_len(10, 20), 5);
        assert_eq!(effective_max_len(4, 20), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn seq() -> impl Strategy<Value = Vec<String>> {
            (2usize..=8).prop_flat_map(|alphabet| {
                prop::collection::vec(
                    (0..alphabet).prop_map(|i| format!("{}", (b'A' + i as u8) as char)),
                    0..=50,
                )
            })
        }

        proptest! {
            #[test]
            fn enumerate_matches_oracle(ops in seq(), max_len in 3usize..=12) {
                let refs: Vec<&str> = ops.iter().map(String::as_str).collect();
                let got: BTreeMap<_, _> = enumerate_subsequences(&OpSequence::from_ops(ops.clone()), 3, max_len)
                    .unwrap().entries.into_iter().collect();
                prop_assert_eq!(got, oracle(&refs, 3, max_len));
            }

            #[test]
            fn stats_scale(weights in prop::collection::vec(1u64..1000, 1..40), c in 1u64..50) {
                let a = weight_stats(&weights).unwrap();
                let scaled: Vec<u64> = weights.iter().map(|w| w * c).collect();
                let b = weight_stats(&scaled).unwrap();
                prop_assert!((b.mu - a.mu * c as f64).abs() <= 1e-9 * b.mu.max(1.0));
                prop_assert!((b.sigma - a.sigma * c as f64).abs() <= 1e-9 * b.sigma.max(1.0));
            }

            #[test]
            fn cddag_flags_are_scale_invariant(weights in prop::collection::vec(1u64..50, 1..20), c in 2u64..10, m in 0.1f64..3.0) {
                let a = detect_cddag(&graph(&weights), m).unwrap();
                let scaled: Vec<u64> = weights.iter().map(|w| w * c).collect();
                let b = detect_cddag(&graph(&scaled), m).unwrap();
                let edges = |d: &Detection| -> Vec<String> {
                    let mut v: Vec<String> = d.evidence.iter().map(|f| match &f.item {
                        Evidence::Edge { child, .. } => child.clone(),
                        _ => unreachable!(),
                    }).collect();
                    v.sort();
                    v
                };
                prop_assert_eq!(edges(&a), edges(&b));
            }

            #[test]
            fn cdcs_monotone_in_k(ops in seq(), k1 in 0.05f64..2.0, dk in 0.0f64..2.0) {
                let s = OpSequence::from_ops(ops);
                let lo = detect_cdcs(&s, k1, 20).unwrap();
                let hi = detect_cdcs(&s, k1 + dk, 20).unwrap();
                for f in &hi.evidence {
                    prop_assert!(lo.evidence.iter().any(|g| g.item == f.item));
                }
                prop_assert!(hi.label <= lo.label);
            }
        }
    }
}
