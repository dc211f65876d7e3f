//! Run reports as TOML documents.
//!
//! Top-level keys: `rrse` and `corr` (test split), `seed`, `best_epoch`,
//! `epochs_run`, `wall_clock_seconds`, optional `dataset`; tables `train`,
//! `valid`, `test`, `baseline` (naive last-value forecast on the test split)
//! and `config`; and one `[[epochs]]` entry per trained epoch. Metrics that
//! are undefined for the data (zero label variance) are omitted.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rrse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corr: Option<f64>,
    pub timestamps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_mae: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid_rrse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid_corr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rrse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corr: Option<f64>,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub wall_clock_seconds: f64,
    pub train: SplitMetrics,
    pub valid: SplitMetrics,
    pub test: SplitMetrics,
    pub baseline: SplitMetrics,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
}

impl ForecastReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// One row of a sweep summary. Failed cells carry the error text instead of
/// metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub neighbors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rrse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    /// Sorted by ascending test RRSE; cells without one come last.
    pub cells: Vec<SweepCell>,
}

impl SweepSummary {
    pub fn new(mut cells: Vec<SweepCell>) -> Self {
        cells.sort_by(|a, b| {
            let key = |c: &SweepCell| c.rrse.unwrap_or(f64::INFINITY);
            key(a)
                .total_cmp(&key(b))
                .then((a.k, a.neighbors).cmp(&(b.k, b.neighbors)))
        });
        Self { cells }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Report(e.to_string()))
    }

    /// Plain-text table of `k, N, rrse, corr` rows.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        let mut out = format!("{:>5} {:>5} {:>10} {:>10}\n", "k", "N", "rrse", "corr");
        for c in &self.cells {
            out.push_str(&format!(
                "{:>5} {:>5} {:>10} {:>10}",
                c.k,
                c.neighbors,
                fmt(c.rrse),
                fmt(c.corr)
            ));
            if let Some(e) = &c.error {
                out.push_str(&format!("  failed: {e}"));
            }
            out.push('\n');
        }
        out
    }
}
