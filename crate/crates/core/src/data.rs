//! Dataset loading, normalization, chronological splits and per-timestamp
//! instance batches.
//!
//! Window convention: the instance of variable `i` at timestamp `t` is the
//! `d` observations `values[t-d+1..=t, i]` and its label is `values[t+h, i]`.
//! Windows may reach back across a segment's left edge; labels never leave
//! their segment.

use std::f64::consts::PI;
use std::fs;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Observations in chronological order (rows) by variable (columns), with the
/// per-column factors that were divided out.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesMatrix {
    values: Matrix,
    scalers: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Max,
    None,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Normalization::Max),
            "none" => Ok(Normalization::None),
            other => Err(Error::Config(format!("unknown normalization {other:?}"))),
        }
    }
}

impl SeriesMatrix {
    /// Wraps raw values with unit scalers.
    pub fn new(values: Matrix) -> Self {
        let scalers = vec![1.0; values.cols()];
        Self { values, scalers }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn scalers(&self) -> &[f64] {
        &self.scalers
    }

    pub fn timestamps(&self) -> usize {
        self.values.rows()
    }

    pub fn variables(&self) -> usize {
        self.values.cols()
    }

    pub fn normalize(&self, scheme: Normalization) -> Result<SeriesMatrix> {
        match scheme {
            Normalization::None => Ok(SeriesMatrix::new(self.values.clone())),
            Normalization::Max => {
                let n = self.variables();
                let mut scalers = vec![0.0f64; n];
                for t in 0..self.timestamps() {
                    for (s, v) in scalers.iter_mut().zip(self.values.row(t)) {
                        *s = s.max(v.abs());
                    }
                }
                if let Some(column) = scalers.iter().position(|&s| s == 0.0) {
                    return Err(Error::ZeroColumn { column });
                }
                let values = Matrix::from_fn(self.timestamps(), n, |t, i| self.values.get(t, i) / scalers[i]);
                Ok(SeriesMatrix { values, scalers })
            }
        }
    }

    /// Undoes normalization, returning values in the original units.
    pub fn denormalized(&self) -> Matrix {
        Matrix::from_fn(self.timestamps(), self.variables(), |t, i| {
            self.values.get(t, i) * self.scalers[i]
        })
    }

    /// Scales a variables-by-time matrix (row `i` = variable `i`) back to
    /// original units.
    pub fn denormalize_rows(&self, m: &Matrix) -> Matrix {
        Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) * self.scalers[i])
    }

    /// The instance batch at timestamp `t`. The caller guarantees
    /// `t + 1 >= window` and `t + horizon < T`.
    pub fn batch_at(&self, t: usize, window: usize, horizon: usize) -> InstanceBatch {
        let n = self.variables();
        let start = t + 1 - window;
        let features = Matrix::from_fn(n, window, |i, s| self.values.get(start + s, i));
        let labels = Matrix::from_fn(n, 1, |i, _| self.values.get(t + horizon, i));
        InstanceBatch {
            timestamp: t,
            features,
            labels,
        }
    }
}

/// Reads a comma-separated matrix, one timestamp per line. Gzip input is
/// detected by its magic bytes.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<SeriesMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut s = String::new();
        GzDecoder::new(&bytes[..])
            .read_to_string(&mut s)
            .map_err(|e| Error::io(path, e))?;
        s
    } else {
        String::from_utf8(bytes).map_err(|e| Error::Parse {
            path: path.into(),
            line: 0,
            msg: format!("not UTF-8: {e}"),
        })?
    };
    parse_matrix(&text, path)
}

fn parse_matrix(text: &str, path: &Path) -> Result<SeriesMatrix> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut lines: Vec<&str> = text.lines().collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(parse_err(1, "empty file".into()));
    }
    let mut data = Vec::new();
    let mut cols = None;
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        let mut count = 0;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("unparsable field {:?}", field.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value {v}")));
            }
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => return Err(parse_err(lineno, format!("expected {c} fields, found {count}"))),
            _ => {}
        }
    }
    let cols = cols.unwrap_or(0);
    Ok(SeriesMatrix::new(Matrix::from_raw(lines.len(), cols, data)))
}

/// Half-open range of timestamps `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Timestamps whose window fits in the data and whose label stays inside
    /// this segment.
    pub fn valid_timestamps(&self, window: usize, horizon: usize) -> Result<Range<usize>> {
        let first = self.start.max(window.saturating_sub(1));
        let last_exclusive = self.end.saturating_sub(horizon);
        if window == 0 || horizon == 0 || first >= last_exclusive {
            return Err(Error::EmptySegment {
                start: self.start,
                end: self.end,
                window,
                horizon,
            });
        }
        Ok(first..last_exclusive)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_end: usize,
    pub valid_end: usize,
    pub total: usize,
    pub fractions: [f64; 3],
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];

impl SplitSpec {
    pub fn train(&self) -> Segment {
        Segment {
            start: 0,
            end: self.train_end,
        }
    }

    pub fn valid(&self) -> Segment {
        Segment {
            start: self.train_end,
            end: self.valid_end,
        }
    }

    pub fn test(&self) -> Segment {
        Segment {
            start: self.valid_end,
            end: self.total,
        }
    }
}

/// Chronological train/valid/test boundaries at `floor(f * T)`.
pub fn split_chronological(total: usize, fractions: [f64; 3], window: usize, horizon: usize) -> Result<SplitSpec> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::Split(format!("fractions out of range: {fractions:?}")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("fractions sum to {sum}, not 1")));
    }
    // The small guard keeps products like 0.6 * 10 from flooring to 5.
    let boundary = |f: f64| ((f * total as f64) + 1e-9).floor() as usize;
    let train_end = boundary(fractions[0]);
    let valid_end = boundary(fractions[0] + fractions[1]).min(total);
    let split = SplitSpec {
        train_end,
        valid_end,
        total,
        fractions,
    };
    let min_len = window + horizon;
    for (name, seg) in [
        ("train", split.train()),
        ("valid", split.valid()),
        ("test", split.test()),
    ] {
        if seg.end < seg.start || seg.len() < min_len {
            return Err(Error::Split(format!(
                "{name} segment [{}, {}) is shorter than window + horizon = {min_len}",
                seg.start, seg.end
            )));
        }
    }
    Ok(split)
}

/// All `n` instances of one timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceBatch {
    pub timestamp: usize,
    /// n x d; row `i` is the window of variable `i`.
    pub features: Matrix,
    /// n x 1; entry `i` is variable `i` at `timestamp + horizon`.
    pub labels: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchOrder {
    Chronological,
    Shuffled { seed: u64 },
}

/// Batches for every valid timestamp of `segment`, in the requested order.
pub fn batch_iter<'a>(
    series: &'a SeriesMatrix,
    segment: Segment,
    window: usize,
    horizon: usize,
    order: BatchOrder,
) -> Result<impl Iterator<Item = InstanceBatch> + 'a> {
    let mut ts: Vec<usize> = segment.valid_timestamps(window, horizon)?.collect();
    if let BatchOrder::Shuffled { seed } = order {
        ts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(ts.into_iter().map(move |t| series.batch_at(t, window, horizon)))
}

/// Sum of sinusoids with distinct periods and phases per variable, scaled into
/// roughly [-1, 1]. No noise.
pub fn synthetic_sinusoids(timestamps: usize, variables: usize, seed: u64) -> SeriesMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<(f64, f64, f64, f64)> = (0..variables)
        .map(|_| {
            let p1 = rng.gen_range(12.0..30.0);
            let p2 = rng.gen_range(40.0..90.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let mix = rng.gen_range(0.2..0.5);
            (p1, p2, phase, mix)
        })
        .collect();
    let values = Matrix::from_fn(timestamps, variables, |t, i| {
        let (p1, p2, phase, mix) = params[i];
        let t = t as f64;
        (1.0 - mix) * (2.0 * PI * t / p1 + phase).sin() + mix * (2.0 * PI * t / p2).cos()
    });
    SeriesMatrix::new(values)
}

/// Every variable is the constant `value[i]` at every timestamp.
pub fn synthetic_constant(timestamps: usize, levels: &[f64]) -> SeriesMatrix {
    SeriesMatrix::new(Matrix::from_fn(timestamps, levels.len(), |_, i| levels[i]))
}
