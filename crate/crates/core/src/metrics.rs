//! RRSE and CORR over variables-by-time prediction matrices.
//!
//! RRSE pools every variable and timestamp against one grand label mean:
//! `sqrt(sum (p - y)^2) / sqrt(sum (y - mean(y))^2)`. CORR is the Pearson
//! correlation of each variable across time, averaged over variables whose
//! predictions and labels both vary.

use crate::autodiff::Matrix;
use crate::data::{Segment, SeriesMatrix};
use crate::error::{Error, Result};

/// Aligned predictions and labels, one row per variable, one column per
/// evaluated timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPair {
    pub predictions: Matrix,
    pub labels: Matrix,
}

impl EvalPair {
    pub fn new(predictions: Matrix, labels: Matrix) -> Result<Self> {
        if predictions.shape() != labels.shape() {
            return Err(Error::Shape {
                op: "eval_pair",
                lhs: predictions.shape(),
                rhs: labels.shape(),
            });
        }
        if !predictions.is_finite() || !labels.is_finite() {
            return Err(Error::Degenerate("non-finite predictions or labels"));
        }
        Ok(Self { predictions, labels })
    }

    pub fn rrse(&self) -> Result<f64> {
        rrse(self)
    }

    pub fn corr(&self) -> Result<f64> {
        corr(self)
    }
}

pub fn rrse(pair: &EvalPair) -> Result<f64> {
    let y = pair.labels.as_slice();
    let p = pair.predictions.as_slice();
    if y.is_empty() {
        return Err(Error::Degenerate("empty evaluation set"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let denom: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom == 0.0 {
        return Err(Error::Degenerate("labels have zero variance"));
    }
    let num: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num.sqrt() / denom.sqrt())
}

pub fn corr(pair: &EvalPair) -> Result<f64> {
    let (n, m) = pair.labels.shape();
    let mut total = 0.0;
    let mut used = 0usize;
    for i in 0..n {
        let y = pair.labels.row(i);
        let p = pair.predictions.row(i);
        let my = y.iter().sum::<f64>() / m as f64;
        let mp = p.iter().sum::<f64>() / m as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in p.iter().zip(y) {
            let (dp, dy) = (a - mp, b - my);
            sxy += dp * dy;
            sxx += dp * dp;
            syy += dy * dy;
        }
        if sxx > 0.0 && syy > 0.0 {
            let denom = (sxx * syy).sqrt();
            let denom = if denom.is_normal() {
                denom
            } else {
                sxx.sqrt() * syy.sqrt()
            };
            total += (sxy / denom).clamp(-1.0, 1.0);
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Degenerate(
            "no variable with nonzero prediction and label variance",
        ));
    }
    Ok(total / used as f64)
}

/// Last observed value as the forecast for every valid timestamp of
/// `segment`, aligned like model evaluation and in original units.
pub fn naive_baseline(series: &SeriesMatrix, segment: Segment, window: usize, horizon: usize) -> Result<EvalPair> {
    let ts: Vec<usize> = segment.valid_timestamps(window, horizon)?.collect();
    let values = series.values();
    let n = series.variables();
    let preds = Matrix::from_fn(n, ts.len(), |i, c| values.get(ts[c], i));
    let labels = Matrix::from_fn(n, ts.len(), |i, c| values.get(ts[c] + horizon, i));
    EvalPair::new(series.denormalize_rows(&preds), series.denormalize_rows(&labels))
}
