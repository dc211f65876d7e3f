use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("matrix data length {len} does not match {rows}x{cols}")]
    Length { rows: usize, cols: usize, len: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("backward root must be 1x1, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },

    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: usize },

    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("column {column} is all zeros and cannot be max-normalized")]
    ZeroColumn { column: usize },

    #[error("no valid timestamps in segment [{start}, {end}) for window {window}, horizon {horizon}")]
    EmptySegment {
        start: usize,
        end: usize,
        window: usize,
        horizon: usize,
    },

    #[error("requested {k} timestamps but the bank holds only {available}")]
    SampleSize { k: usize, available: usize },

    #[error("degenerate metric: {0}")]
    Degenerate(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (timestamp {timestamp})")]
    Diverged {
        epoch: usize,
        batch: usize,
        timestamp: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("report: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
