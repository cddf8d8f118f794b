//! Scoring against ground truth and threshold sweeps.
//!
//! "Cycle" is the positive class. Non-cycle precision, recall and F1 come from
//! the same confusion matrix with the classes swapped.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectorParams, Method};
use crate::error::{Error, Result};
use crate::runner::{detect_corpus, DetectorConfig};
use crate::semantic::EmbeddingProvider;
use crate::trace_model::Trajectory;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Confusion matrix with positive and negative classes exchanged.
    pub fn swapped(&self) -> Confusion {
        Confusion {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    pub fn flagged(&self) -> u64 {
        self.tp + self.fp
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    fn positive_class(c: &Confusion) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cycle: ClassMetrics,
    pub non_cycle: ClassMetrics,
    pub accuracy: f64,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        Metrics {
            cycle: ClassMetrics::positive_class(&c),
            non_cycle: ClassMetrics::positive_class(&c.swapped()),
            accuracy: ratio(c.tp + c.tn, c.total()),
            confusion: c,
        }
    }
}

/// Compares binary predictions with ground truth over identical trace ids.
pub fn score(predictions: &BTreeMap<String, u8>, truth: &BTreeMap<String, u8>) -> Result<Metrics> {
    let missing_pred: Vec<&str> = truth
        .keys()
        .filter(|k| !predictions.contains_key(*k))
        .map(String::as_str)
        .collect();
    let missing_truth: Vec<&str> = predictions
        .keys()
        .filter(|k| !truth.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !missing_pred.is_empty() || !missing_truth.is_empty() {
        return Err(Error::Domain(format!(
            "trace id mismatch; without prediction: [{}]; without truth: [{}]",
            missing_pred.join(", "),
            missing_truth.join(", ")
        )));
    }
    let mut c = Confusion::default();
    for (id, &p) in predictions {
        match (p != 0, truth[id] != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(Metrics::from_confusion(c))
}

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub trace_id: String,
    pub label: u8,
    pub method: Method,
    pub params: DetectorParams,
    pub evidence_count: usize,
}

impl Prediction {
    pub fn new(trace_id: &str, d: &Detection) -> Self {
        Prediction {
            trace_id: trace_id.to_string(),
            label: d.label,
            method: d.method,
            params: d.params.clone(),
            evidence_count: d.evidence.len(),
        }
    }
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("<line {}>", i + 1), e.to_string()))?;
        out.push(p);
    }
    Ok(out)
}

pub fn label_map(predictions: &[Prediction]) -> BTreeMap<String, u8> {
    predictions
        .iter()
        .map(|p| (p.trace_id.clone(), p.label))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    M,
    K,
    Phi,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::M => "m",
            SweepParam::K => "k",
            SweepParam::Phi => "phi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(SweepParam::M),
            "k" => Ok(SweepParam::K),
            "phi" => Ok(SweepParam::Phi),
            _ => Err(Error::Config(format!("unknown sweep parameter `{s}`"))),
        }
    }

    fn applies_to(self, method: Method) -> bool {
        matches!(
            (self, method),
            (SweepParam::M, Method::Cddag)
                | (SweepParam::K, Method::Cdcs | Method::Hybrid)
                | (SweepParam::Phi, Method::Cdsa | Method::Hybrid)
        )
    }

    pub fn set(self, cfg: &mut DetectorConfig, value: f64) {
        match self {
            SweepParam::M => cfg.m = value,
            SweepParam::K => cfg.k = value,
            SweepParam::Phi => cfg.phi = value,
        }
    }
}

/// Grid values are rounded to 10 decimals so that `from + i * step` prints cleanly.
fn tidy(v: f64) -> f64 {
    (v * 1e10).round() / 1e10
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub method: Method,
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepGrid {
    pub fn new(method: Method, param: SweepParam, values: Vec<f64>) -> Result<Self> {
        if !param.applies_to(method) {
            return Err(Error::Config(format!(
                "parameter `{}` does not apply to {method}",
                param.as_str()
            )));
        }
        if values.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "sweep values must be strictly increasing".into(),
            ));
        }
        Ok(SweepGrid {
            method,
            param,
            values,
        })
    }

    /// `from, from + step, ...` up to `to` inclusive (with a small tolerance).
    pub fn range(method: Method, param: SweepParam, from: f64, to: f64, step: f64) -> Result<Self> {
        if step.is_nan() || step <= 0.0 || to < from {
            return Err(Error::Config(format!(
                "invalid range {from}..{to} step {step}"
            )));
        }
        let n = ((to - from) / step + 1e-9).floor() as usize + 1;
        let values = (0..n).map(|i| tidy(from + i as f64 * step)).collect();
        SweepGrid::new(method, param, values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub param: SweepParam,
    pub value: f64,
    pub metrics: Metrics,
}

/// Runs the grid in order. Any detector failure aborts the sweep.
pub fn sweep(
    corpus: &[Trajectory],
    truth: &BTreeMap<String, u8>,
    grid: &SweepGrid,
    fixed: &DetectorConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<SweepRow>> {
    grid.values
        .iter()
        .map(|&value| {
            let mut cfg = *fixed;
            grid.param.set(&mut cfg, value);
            let detections = detect_corpus(grid.method, corpus, &cfg, provider)?;
            let predictions = corpus
                .iter()
                .zip(&detections)
                .map(|(t, d)| (t.trace_id().to_string(), d.label))
                .collect();
            Ok(SweepRow {
                method: grid.method,
                param: grid.param,
                value,
                metrics: score(&predictions, truth)?,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "method,param,value,accuracy,cycle_precision,cycle_recall,cycle_f1,noncycle_precision,noncycle_recall,noncycle_f1,tp,fp,fn,tn";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.metrics;
        let c = &m.confusion;
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            r.method,
            r.param.as_str(),
            tidy(r.value),
            m.accuracy,
            m.cycle.precision,
            m.cycle.recall,
            m.cycle.f1,
            m.non_cycle.precision,
            m.non_cycle.recall,
            m.non_cycle.f1,
            c.tp,
            c.fp,
            c.fn_,
            c.tn
        );
    }
    out
}

/// Human-readable threshold for a method's parameters.
pub fn threshold_label(method: Method, p: &DetectorParams) -> String {
    let fmt = |v: Option<f64>| {
        v.map(|x| format!("{}", tidy(x)))
            .unwrap_or_else(|| "?".into())
    };
    match method {
        Method::Cddag => format!("mu + {} * sigma", fmt(p.m)),
        Method::Cdcs => format!("mu + {} * sigma", fmt(p.k)),
        Method::Cdsa => format!("phi > {}", fmt(p.phi)),
        Method::Hybrid => format!("phi > {}, mu + {} * sigma", fmt(p.phi), fmt(p.k)),
    }
}

/// Table with one row per method: accuracy, then precision/recall/F1 for the
/// cycle and non-cycle classes.
pub fn render_report(rows: &[(Method, String, Metrics)]) -> String {
    let mut out = String::new();
    let w = rows.iter().map(|r| r.1.len()).chain([9]).max().unwrap_or(9);
    let _ = writeln!(
        out,
        "{:<8} {:<w$} {:>8} | {:>9} {:>9} {:>9} | {:>9} {:>9} {:>9} | {:>5} {:>5} {:>5} {:>5}",
        "method",
        "threshold",
        "accuracy",
        "cyc_prec",
        "cyc_rec",
        "cyc_f1",
        "non_prec",
        "non_rec",
        "non_f1",
        "tp",
        "fp",
        "fn",
        "tn"
    );
    for (method, threshold, m) in rows {
        let c = &m.confusion;
        let _ = writeln!(
            out,
            "{:<8} {:<w$} {:>8.2} | {:>9.2} {:>9.2} {:>9.2} | {:>9.2} {:>9.2} {:>9.2} | {:>5} {:>5} {:>5} {:>5}",
            method.as_str(),
            threshold,
            m.accuracy,
            m.cycle.precision,
            m.cycle.recall,
            m.cycle.f1,
            m.non_cycle.precision,
            m.non_cycle.recall,
            m.non_cycle.f1,
            c.tp,
            c.fp,
            c.fn_,
            c.tn
        );
    }
    out
}
