//! Instance-wise graph forecasting for multivariate time series.
//!
//! Each variable's recent window is encoded into an embedding; training
//! timestamps whose mean embedding is most similar to the current one are
//! retrieved, and their instances are aggregated over a masked cosine graph
//! before a linear head produces the forecast.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod report;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
