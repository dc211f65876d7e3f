//! Training loop, rolling evaluation and the run configuration.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Matrix, Tape};
use crate::data::{
    batch_iter, split_chronological, BatchOrder, Normalization, Segment, SeriesMatrix, SplitSpec, DEFAULT_FRACTIONS,
};
use crate::encoder::{build_bank, EmbeddingBank};
use crate::error::{Error, Result};
use crate::metrics::{naive_baseline, EvalPair};
use crate::model::{forward_batch, loss, ForwardConfig, ModelParams, Sampling, Variant};
use crate::report::{EpochRecord, ForecastReport, SplitMetrics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub k: usize,
    pub neighbors: usize,
    pub hidden: usize,
    pub window: usize,
    pub horizon: usize,
    pub variant: Variant,
    pub seed: u64,
    pub normalization: Normalization,
    /// Stop after this many epochs without a better validation RRSE.
    pub patience: Option<usize>,
    /// Keep each batch's own timestamp out of its sampled neighbours.
    pub exclude_self: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 100,
            lambda: 1e-4,
            k: 10,
            neighbors: 10,
            hidden: 256,
            window: 168,
            horizon: 3,
            variant: Variant::Full,
            seed: 0,
            normalization: Normalization::Max,
            patience: None,
            exclude_self: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.k == 0 || self.neighbors == 0 {
            return bad("k and neighbors must be at least 1");
        }
        if self.hidden == 0 || self.window == 0 || self.horizon == 0 {
            return bad("hidden, window and horizon must be at least 1");
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed must be below 2^63");
        }
        if self.patience == Some(0) {
            return bad("patience must be at least 1");
        }
        Ok(())
    }

    fn forward_config(&self, sampling: Sampling, timestamp: usize) -> ForwardConfig {
        ForwardConfig {
            k: self.k,
            neighbors: self.neighbors,
            sampling,
            exclude: self.exclude_self.then_some(timestamp),
        }
    }
}

/// Trained parameters (best validation epoch) and the run report.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub report: ForecastReport,
}

/// Seed for the random sampler when evaluating timestamp `t`, so evaluation
/// does not depend on batch order or thread scheduling.
fn eval_seed(seed: u64, t: usize) -> u64 {
    seed ^ (t as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn sampling_for_eval(config: &TrainConfig, t: usize) -> Sampling {
    match config.variant {
        Variant::Ns => Sampling::Random {
            seed: eval_seed(config.seed, t),
        },
        _ => Sampling::Similarity,
    }
}

/// Rolling forecast over every valid timestamp of `segment`. Returns
/// de-normalized predictions and labels, one row per variable and one column
/// per timestamp. Timestamps are evaluated in parallel into disjoint columns.
pub fn evaluate(
    series: &SeriesMatrix,
    segment: Segment,
    params: &ModelParams,
    bank: &EmbeddingBank,
    config: &TrainConfig,
) -> Result<EvalPair> {
    let (d, h) = (config.window, config.horizon);
    let ts: Vec<usize> = segment.valid_timestamps(d, h)?.collect();
    let columns = ts
        .par_iter()
        .map(|&t| {
            let batch = series.batch_at(t, d, h);
            let mut tape = Tape::new();
            let nodes = params.bind(&mut tape, false);
            let cfg = config.forward_config(sampling_for_eval(config, t), t);
            let fwd = forward_batch(&mut tape, &nodes, bank, &batch.features, &cfg)?;
            Ok(tape.value(fwd.predictions).as_slice().to_vec())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let n = series.variables();
    let values = series.values();
    let preds = Matrix::from_fn(n, ts.len(), |i, c| columns[c][i]);
    let labels = Matrix::from_fn(n, ts.len(), |i, c| values.get(ts[c] + h, i));
    EvalPair::new(series.denormalize_rows(&preds), series.denormalize_rows(&labels))
}

fn metrics_of(pair: &EvalPair) -> SplitMetrics {
    SplitMetrics {
        rrse: pair.rrse().ok(),
        corr: pair.corr().ok(),
        timestamps: pair.labels.cols(),
    }
}

/// One pass over the shuffled training batches. Returns mean loss and mean
/// MAE over the batches.
#[allow(clippy::too_many_arguments)]
fn train_epoch(
    series: &SeriesMatrix,
    split: &SplitSpec,
    params: &mut ModelParams,
    adam: &mut Adam,
    bank: &EmbeddingBank,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<(f64, f64)> {
    let order = BatchOrder::Shuffled { seed: rng.gen() };
    let (mut loss_sum, mut mae_sum, mut count) = (0.0, 0.0, 0usize);
    let mut tape = Tape::new();
    for (b, batch) in batch_iter(series, split.train(), config.window, config.horizon, order)?.enumerate() {
        tape.truncate(0);
        let nodes = params.bind(&mut tape, true);
        let sampling = match config.variant {
            Variant::Ns => Sampling::Random { seed: rng.gen() },
            _ => Sampling::Similarity,
        };
        let cfg = config.forward_config(sampling, batch.timestamp);
        let fwd = forward_batch(&mut tape, &nodes, bank, &batch.features, &cfg)?;
        let labels = tape.constant(batch.labels);
        let ids = nodes.ids();
        let l = loss(&mut tape, fwd.predictions, labels, &ids, config.lambda)?;
        let diverged = Error::Diverged {
            epoch,
            batch: b,
            timestamp: batch.timestamp,
        };
        let total = tape.value(l.total).item();
        if !total.is_finite() {
            return Err(diverged);
        }
        let grads = tape.backward(l.total)?;
        let grads: Vec<Matrix> = ids
            .iter()
            .map(|&id| grads.get_or_zeros(id, tape.value(id).shape()))
            .collect();
        match adam.step(&mut params.tensors_mut(), &grads) {
            Err(Error::NonFiniteGradient { .. }) => return Err(diverged),
            other => other?,
        }
        loss_sum += total;
        mae_sum += tape.value(l.mae).item();
        count += 1;
    }
    Ok((loss_sum / count as f64, mae_sum / count as f64))
}

/// Trains on the chronological 60/20/20 split of `raw`, keeps the parameters
/// with the best validation RRSE, and reports metrics on every split.
pub fn train(raw: &SeriesMatrix, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let series = raw.normalize(config.normalization)?;
    let split = split_chronological(series.timestamps(), DEFAULT_FRACTIONS, config.window, config.horizon)?;
    let (d, h) = (config.window, config.horizon);

    let mut params = ModelParams::init(config.hidden, config.variant, config.seed);
    let mut adam = Adam::new(config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut bank = build_bank(&series, split.train(), &params.encoder, d, h, 0)?;
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    for epoch in 1..=config.epochs {
        let (train_loss, train_mae) =
            train_epoch(&series, &split, &mut params, &mut adam, &bank, config, &mut rng, epoch)?;
        // Parameters are fixed until the next epoch starts, so this bank
        // serves both validation and the next epoch's sampling.
        bank = build_bank(&series, split.train(), &params.encoder, d, h, epoch)?;
        let valid = metrics_of(&evaluate(&series, split.valid(), &params, &bank, config)?);
        records.push(EpochRecord {
            epoch,
            train_loss,
            train_mae,
            valid_rrse: valid.rrse,
            valid_corr: valid.corr,
        });

        let score = valid.rrse.unwrap_or(f64::INFINITY);
        let improved = match &best {
            None => true,
            Some((s, _, _)) => score < *s || (s.is_infinite() && score.is_infinite()),
        };
        if improved {
            best = Some((score, epoch, params.clone()));
        } else if let (Some(p), Some((_, at, _))) = (config.patience, &best) {
            if epoch - at >= p {
                break;
            }
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch runs");
    let bank = build_bank(&series, split.train(), &params.encoder, d, h, best_epoch)?;
    let train_m = metrics_of(&evaluate(&series, split.train(), &params, &bank, config)?);
    let valid_m = metrics_of(&evaluate(&series, split.valid(), &params, &bank, config)?);
    let test_m = metrics_of(&evaluate(&series, split.test(), &params, &bank, config)?);
    let baseline = metrics_of(&naive_baseline(&series, split.test(), d, h)?);

    let report = ForecastReport {
        dataset: None,
        rrse: test_m.rrse,
        corr: test_m.corr,
        seed: config.seed,
        best_epoch,
        epochs_run: records.len(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        train: train_m,
        valid: valid_m,
        test: test_m,
        baseline,
        config: config.clone(),
        epochs: records,
    };
    Ok(TrainOutcome { params, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_sinusoids;

    fn small() -> TrainConfig {
        TrainConfig {
            lr: 1e-3,
            epochs: 2,
            k: 2,
            neighbors: 3,
            hidden: 4,
            window: 6,
            horizon: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn validation_rejects_bad_values() {
        for cfg in [
            TrainConfig { lr: 0.0, ..small() },
            TrainConfig {
                lambda: -1.0,
                ..small()
            },
            TrainConfig { epochs: 0, ..small() },
            TrainConfig { k: 0, ..small() },
            TrainConfig {
                neighbors: 0,
                ..small()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
        assert!(small().validate().is_ok());
    }

    #[test]
    fn evaluation_shape_and_determinism() {
        let raw = synthetic_sinusoids(80, 3, 1);
        let cfg = small();
        let series = raw.normalize(cfg.normalization).unwrap();
        let split = split_chronological(80, DEFAULT_FRACTIONS, cfg.window, cfg.horizon).unwrap();
        let params = ModelParams::init(cfg.hidden, cfg.variant, 3);
        let bank = build_bank(&series, split.train(), &params.encoder, cfg.window, cfg.horizon, 0).unwrap();
        let a = evaluate(&series, split.test(), &params, &bank, &cfg).unwrap();
        let b = evaluate(&series, split.test(), &params, &bank, &cfg).unwrap();
        let expected = split.test().valid_timestamps(cfg.window, cfg.horizon).unwrap().len();
        assert_eq!(a.predictions.shape(), (3, expected));
        assert_eq!(a, b);
    }

    #[test]
    fn training_runs_and_reports() {
        let raw = synthetic_sinusoids(80, 3, 1);
        let out = train(&raw, &small()).unwrap();
        assert_eq!(out.report.epochs.len(), 2);
        assert!(out.report.rrse.unwrap().is_finite());
        assert!((1..=2).contains(&out.report.best_epoch));
    }

    #[test]
    fn patience_stops_early() {
        let raw = synthetic_sinusoids(80, 2, 4);
        let cfg = TrainConfig {
            epochs: 30,
            lr: 0.5,
            patience: Some(1),
            ..small()
        };
        let out = train(&raw, &cfg).unwrap();
        assert!(out.report.epochs_run < 30);
    }
}
