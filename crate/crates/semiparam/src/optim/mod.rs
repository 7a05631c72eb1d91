//! Deterministic optimizers: L-BFGS for marginal-likelihood fits, Adam for
//! stochastic variational training, plus a finite-difference gradient oracle.

mod adam;
mod lbfgs;

pub use adam::{adam_step_loop, AdamParams, AdamState};
pub use lbfgs::{lbfgs_minimize, LbfgsOptions, LbfgsOutcome, LbfgsStatus, Objective};

use nalgebra::DVector;

/// Value and gradient of a scalar objective at one point.
#[derive(Debug, Clone)]
pub struct ObjectiveEvaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
}

/// Central finite differences, one evaluation pair per dimension.
pub fn finite_diff_gradient<F>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for d in 0..x.len() {
        probe[d] = x[d] + h;
        let fp = f(&probe);
        probe[d] = x[d] - h;
        let fm = f(&probe);
        probe[d] = x[d];
        grad[d] = (fp - fm) / (2.0 * h);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    #[test]
    fn finite_diff_linear() {
        let c = dvector![1.5, -0.3, 2.0];
        let f = |x: &DVector<f64>| c.dot(x);
        let g = finite_diff_gradient(f, &dvector![0.2, 0.4, -1.0], 1e-5);
        for d in 0..3 {
            assert_abs_diff_eq!(g[d], c[d], epsilon = 1e-9);
        }
    }

    #[test]
    fn finite_diff_quadratic() {
        let f = |x: &DVector<f64>| x.norm_squared();
        let g = finite_diff_gradient(f, &dvector![1.0, 2.0], 1e-5);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(g[1], 4.0, epsilon = 1e-7);
    }
}
