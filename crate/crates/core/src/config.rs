//! Run configuration: a flat `key = value` file (TOML syntax) overlaid by
//! command-line flags. The effective configuration of every run is written
//! back out in the same format so the run can be replayed with `--config`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub rejects: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub dot: Option<PathBuf>,
    pub dot_trace: Option<String>,

    pub method: Option<String>,
    pub m: Option<f64>,
    pub k: Option<f64>,
    pub phi: Option<f64>,
    pub max_len: Option<usize>,
    pub scope: Option<String>,

    pub provider: Option<String>,
    pub endpoint: Option<String>,
    pub timeout_ms: Option<u64>,
    pub dimension: Option<usize>,

    pub seed: Option<u64>,
    pub per_class: Option<usize>,
    pub counts: Option<BTreeMap<String, usize>>,
    pub noise: Option<f64>,
    pub depth: Option<usize>,
    pub repeat_min: Option<usize>,
    pub repeat_max: Option<usize>,
    pub hard_timeseries_percent: Option<u32>,

    pub param: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub step: Option<f64>,
    pub values: Option<Vec<f64>>,

    pub workers: Option<usize>,
    pub verbosity: Option<String>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(mut self, top: Config) -> Config {
        overlay!(self, top;
            input, output, truth, predictions, manifest, rejects, json, dot, dot_trace,
            method, m, k, phi, max_len, scope,
            provider, endpoint, timeout_ms, dimension,
            seed, per_class, counts, noise, depth, repeat_min, repeat_max, hard_timeseries_percent,
            param, from, to, step, values,
            workers, verbosity,
        );
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}
