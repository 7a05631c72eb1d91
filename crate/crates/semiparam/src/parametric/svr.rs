//! Epsilon-insensitive SVR on the model's feature map.
//!
//! The kernel is the finite-dimensional inner product k(x, x') = phi(x)^T phi(x'),
//! and the basis carries any offset term, so the dual has no bias equality
//! constraint and coordinate-wise updates are exact. Each dual variable
//! beta_n = alpha_n - alpha_n^* lives in [-C, C]; the primal weight vector
//! w = Phi^T beta is maintained incrementally.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisModel;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::parametric::{training_rmse, ParametricFitReport};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            tol: 1e-3,
            max_sweeps: 200_000,
        }
    }
}

pub fn svr_fit(model: &BasisModel, data: &Dataset, params: &SvrParams) -> Result<ParametricFitReport> {
    svr_fit_with_dual(model, data, params).map(|(report, _beta)| report)
}

/// As `svr_fit`, additionally returning the dual variables for diagnostics.
pub fn svr_fit_with_dual(
    model: &BasisModel,
    data: &Dataset,
    params: &SvrParams,
) -> Result<(ParametricFitReport, DVector<f64>)> {
    if !(params.c > 0.0) || !(params.epsilon >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "svr requires C > 0 and epsilon >= 0, got C={} epsilon={}",
            params.c, params.epsilon
        )));
    }
    let phi = model.stacked_features(data.inputs());
    let y = BasisModel::stack_targets(data.targets());
    let n = phi.nrows();
    let m = phi.ncols();

    let k_diag: Vec<f64> = (0..n).map(|r| phi.row(r).norm_squared()).collect();
    let mut beta = DVector::zeros(n);
    let mut w: DVector<f64> = DVector::zeros(m);

    let mut converged = false;
    for _sweep in 0..params.max_sweeps {
        // stop on the worst KKT violation of the dual: it is scale-free in
        // beta, which matters when C is large and the low-rank kernel lets
        // beta drift in its null space long after the errors have settled
        let mut max_violation: f64 = 0.0;
        for r in 0..n {
            if k_diag[r] <= f64::EPSILON {
                continue;
            }
            let f_r = phi.row(r).transpose().dot(&w);
            let err = y[r] - f_r;
            let b = beta[r];
            max_violation = max_violation.max(kkt_violation(b, err, params));

            // residual of all other variables' contribution
            let rhs = y[r] - (f_r - k_diag[r] * b);
            let target = soft_threshold(rhs, params.epsilon) / k_diag[r];
            let new_beta = target.clamp(-params.c, params.c);
            let delta = new_beta - b;
            if delta != 0.0 {
                w.axpy(delta, &phi.row(r).transpose(), 1.0);
                beta[r] = new_beta;
            }
        }
        if max_violation < params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "svr coordinate descent exceeded {} sweeps (C={}, eps={})",
            params.max_sweeps, params.c, params.epsilon
        )));
    }

    let train_rmse = training_rmse(model, &w, data.inputs(), data.targets())?;
    let rank = {
        let svd = nalgebra::linalg::SVD::new(phi, false, false);
        let cutoff = 1e-10 * svd.singular_values.amax();
        svd.singular_values.iter().filter(|&&s| s > cutoff).count()
    };
    Ok((
        ParametricFitReport {
            coefficients: w,
            train_rmse,
            rank,
            rank_deficient: rank < m,
        },
        beta,
    ))
}

/// Distance of one dual coordinate from its KKT condition, measured on the
/// residual scale.
fn kkt_violation(b: f64, err: f64, params: &SvrParams) -> f64 {
    if b == 0.0 {
        (err.abs() - params.epsilon).max(0.0)
    } else if b >= params.c {
        (params.epsilon - err).max(0.0)
    } else if b <= -params.c {
        (err + params.epsilon).max(0.0)
    } else if b > 0.0 {
        (err - params.epsilon).abs()
    } else {
        (err + params.epsilon).abs()
    }
}

fn soft_threshold(v: f64, eps: f64) -> f64 {
    if v > eps {
        v - eps
    } else if v < -eps {
        v + eps
    } else {
        0.0
    }
}

/// KKT complementary-slackness check on the converged dual variables.
pub fn check_kkt(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    params: &SvrParams,
    tol: f64,
) -> Result<()> {
    let w = phi.transpose() * beta;
    for r in 0..phi.nrows() {
        let err = y[r] - phi.row(r).transpose().dot(&w);
        let b = beta[r];
        let violation = if b.abs() < tol {
            (err.abs() - params.epsilon).max(0.0)
        } else if b > 0.0 && b < params.c - tol {
            (err - params.epsilon).abs()
        } else if b < 0.0 && b > -params.c + tol {
            (err + params.epsilon).abs()
        } else if b >= params.c - tol {
            (params.epsilon - err).max(0.0)
        } else {
            (err + params.epsilon).max(0.0)
        };
        if violation > tol.max(1e-6) {
            return Err(Error::NoConvergence(format!(
                "KKT violation {violation:.3e} at row {r} (beta={b:.3e}, err={err:.3e})"
            )));
        }
    }
    Ok(())
}
