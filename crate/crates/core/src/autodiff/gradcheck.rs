use super::matrix::Matrix;
use super::tape::{NodeId, Tape};
use crate::error::Result;

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// max over entries of |analytic - numeric| / max(1, |analytic|);
    /// infinite when any evaluation was non-finite.
    pub max_rel_error: f64,
    /// (parameter index, flat entry index) of the worst entry.
    pub worst: (usize, usize),
    pub entries: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < tol
    }
}

/// Compares the gradient of a scalar function built on a fresh tape against
/// central finite differences. `f` receives the tape and one parameter node per
/// entry of `params` and must return a 1x1 node.
pub fn finite_difference_check<F>(params: &[Matrix], epsilon: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let eval = |ps: &[Matrix]| -> Result<(Tape, Vec<NodeId>, NodeId)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let root = f(&mut tape, &ids)?;
        Ok((tape, ids, root))
    };

    let (tape, ids, root) = eval(params)?;
    let grads = tape.backward(root)?;
    let analytic: Vec<Matrix> = ids
        .iter()
        .zip(params)
        .map(|(&id, p)| grads.get_or_zeros(id, p.shape()))
        .collect();

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        entries: 0,
    };
    if !tape.value(root).is_finite() {
        report.max_rel_error = f64::INFINITY;
        return Ok(report);
    }

    let mut work = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.len() {
            let orig = p.as_slice()[k];
            work[pi].as_mut_slice()[k] = orig + epsilon;
            let (t, _, r) = eval(&work)?;
            let plus = t.value(r).item();
            work[pi].as_mut_slice()[k] = orig - epsilon;
            let (t, _, r) = eval(&work)?;
            let minus = t.value(r).item();
            work[pi].as_mut_slice()[k] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[pi].as_slice()[k];
            let err = if numeric.is_finite() && a.is_finite() {
                (a - numeric).abs() / a.abs().max(1.0)
            } else {
                f64::INFINITY
            };
            report.entries += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = (pi, k);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]);
        let check = finite_difference_check(&[x], DEFAULT_EPSILON, |t, p| {
            let sq = t.mul(p[0], p[0])?;
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(check.passes(1e-6), "{check:?}");
        assert_eq!(check.entries, 2);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        // detach hides the true dependency, so the analytic gradient is zero
        let x = Matrix::from_rows(&[[0.5]]);
        let check = finite_difference_check(&[x], DEFAULT_EPSILON, |t, p| {
            let d = t.detach(p[0]);
            let sq = t.mul(d, d)?;
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(!check.passes(1e-4));
        assert!((check.max_rel_error - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_is_failure() {
        let x = Matrix::from_rows(&[[1e300]]);
        let check = finite_difference_check(&[x], DEFAULT_EPSILON, |t, p| {
            let sq = t.mul(p[0], p[0])?;
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(!check.passes(1e-4));
    }
}
