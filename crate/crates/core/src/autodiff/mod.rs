//! Dense-matrix reverse-mode differentiation, Adam, and a finite-difference
//! gradient checker.

mod adam;
mod gradcheck;
mod matrix;
mod tape;

pub use adam::Adam;
pub use gradcheck::{finite_difference_check, GradCheck, DEFAULT_EPSILON};
pub use matrix::Matrix;
pub use tape::{cosine, Gradients, NodeId, Op, Tape, NORM_EPS};

/// Negative slope used by every LeakyReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.01;
