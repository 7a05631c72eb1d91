//! Built-in oracle suite: independent numerical checks of the analytic
//! gradients and the simulator, runnable from the CLI (`verify`) and from
//! the acceptance tests.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bnn::{bnn_build, BnnConfig};
use crate::error::Result;
use crate::gp::{GpFitOptions, GpProblem, MeanSpec};
use crate::scenario::toy::toy_model;
use crate::simdyn::{
    coriolis_matrix, inverse_dynamics, mass_matrix, mass_matrix_derivatives, raw_theta, regressor,
    total_energy, RobotParams,
};

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> OracleCheck {
    OracleCheck {
        name,
        passed,
        detail,
    }
}

/// Analytic NLML gradient vs central finite differences on random small
/// problems, with and without a parametric mean.
fn gp_gradient_check() -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6f7261_01);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let n = 20;
        let dim = 1 + trial % 3;
        let x: DMatrix<f64> = DMatrix::from_fn(n, dim, |_, _| rng.gen_range(-2.0..2.0));
        let y = DMatrix::from_fn(n, 1, |r, _| {
            (2.0 * x[(r, 0)]).sin() + 0.3 * rng.gen_range(-1.0..1.0)
        });
        let mean = if trial % 2 == 0 && dim == 1 {
            MeanSpec::Basis(toy_model(DVector::from_fn(4, |_, _| {
                rng.gen_range(-1.0..1.0)
            })))
        } else {
            MeanSpec::Zero
        };
        let problem = GpProblem::from_matrices(x, y, mean)?;
        let packed = {
            let p0 = problem.initial_packed(&GpFitOptions::default());
            DVector::from_fn(p0.len(), |i, _| p0[i] + rng.gen_range(-0.3..0.3))
        };
        let eval = problem.neg_log_marginal_likelihood(&packed)?;
        let h = 1e-6;
        for i in 0..packed.len() {
            let mut hi = packed.clone();
            let mut lo = packed.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (problem.nlml_value(&hi)? - problem.nlml_value(&lo)?) / (2.0 * h);
            let rel = (eval.gradient[i] - fd).abs() / eval.gradient[i].abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(check(
        "gp_nlml_gradient",
        worst < 1e-5,
        format!("worst relative gradient error {worst:.3e} (tol 1e-5)"),
    ))
}

/// Analytic ELBO gradient vs finite differences on a tiny 1-2-1 network
/// with a frozen weight sample.
fn bnn_elbo_gradient_check() -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6f7261_02);
    let x: DMatrix<f64> = DMatrix::from_fn(16, 1, |_, _| rng.gen_range(-1.0..1.0));
    let y = DMatrix::from_fn(16, 1, |r, _| (3.0 * x[(r, 0)]).sin());
    let cfg = BnnConfig {
        hidden_width: 2,
        hidden_layers: 1,
        ..Default::default()
    };
    let model = bnn_build(1, 1, None, &x, &y, &cfg, 7)?;
    let sample = {
        let mut srng = ChaCha8Rng::seed_from_u64(3);
        model.sample_weights(&mut srng)
    };
    let eval = model.elbo_loss_with_sample(&x, &y, 1.0, &sample)?;
    let packed = model.packed();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for i in 0..packed.len() {
        let mut hi = packed.clone();
        let mut lo = packed.clone();
        hi[i] += h;
        lo[i] -= h;
        probe.set_packed(&hi)?;
        let vh = probe.elbo_loss_with_sample(&x, &y, 1.0, &sample)?.value;
        probe.set_packed(&lo)?;
        let vl = probe.elbo_loss_with_sample(&x, &y, 1.0, &sample)?.value;
        let fd = (vh - vl) / (2.0 * h);
        let rel = (eval.gradient[i] - fd).abs() / eval.gradient[i].abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(check(
        "bnn_elbo_gradient",
        worst < 1e-4,
        format!("worst relative gradient error {worst:.3e} (tol 1e-4)"),
    ))
}

/// Grouped regressor against the direct Lagrangian inverse dynamics.
fn regressor_consistency_check() -> OracleCheck {
    let p = RobotParams::ground_truth();
    let theta = raw_theta(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6f7261_03);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q = Vector3::from_fn(|_, _| rng.gen_range(-3.14..3.14));
        let qd = Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
        let qdd = Vector3::from_fn(|_, _| rng.gen_range(-10.0..10.0));
        let tau_reg = regressor(&p.lengths, p.gravity, &q, &qd, &qdd) * &theta;
        let tau_dyn = inverse_dynamics(&p, &q, &qd, &qdd);
        for i in 0..3 {
            worst = worst.max((tau_reg[i] - tau_dyn[i]).abs());
        }
    }
    check(
        "simdyn_regressor_consistency",
        worst < 1e-10,
        format!("worst torque residual {worst:.3e} over 1000 states (tol 1e-10)"),
    )
}

/// Passive gravity-free rollout conserves kinetic energy.
fn energy_conservation_check() -> Result<OracleCheck> {
    let mut p = RobotParams::ground_truth();
    p.gravity = 0.0;
    p.viscous = [0.0; 3];
    p.coulomb = [0.0; 3];
    let dt = 1e-3;
    let mut q = Vector3::new(0.4, -0.6, 1.1);
    let mut qd = Vector3::new(0.9, -0.5, 0.7);
    let e0 = total_energy(&p, &q, &qd);
    let accel = |q: &Vector3<f64>, qd: &Vector3<f64>| -> Vector3<f64> {
        let rhs = -coriolis_matrix(&p, q, qd) * qd;
        mass_matrix(&p, q).cholesky().expect("SPD").solve(&rhs)
    };
    for _ in 0..10_000 {
        let k1q = qd;
        let k1v = accel(&q, &qd);
        let k2q = qd + 0.5 * dt * k1v;
        let k2v = accel(&(q + 0.5 * dt * k1q), &(qd + 0.5 * dt * k1v));
        let k3q = qd + 0.5 * dt * k2v;
        let k3v = accel(&(q + 0.5 * dt * k2q), &(qd + 0.5 * dt * k2v));
        let k4q = qd + dt * k3v;
        let k4v = accel(&(q + dt * k3q), &(qd + dt * k3v));
        q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        qd += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    let drift = ((total_energy(&p, &q, &qd) - e0) / e0).abs();
    Ok(check(
        "simdyn_energy_conservation",
        drift < 1e-6,
        format!("relative energy drift {drift:.3e} over 10 s (tol 1e-6)"),
    ))
}

/// Mass matrix SPD and the power-balance skew-symmetry of dM/dt - 2C.
fn structure_check() -> OracleCheck {
    let p = RobotParams::ground_truth();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6f7261_04);
    let mut spd_ok = true;
    let mut worst_skew = 0.0f64;
    for _ in 0..1000 {
        let q = Vector3::from_fn(|_, _| rng.gen_range(-3.14..3.14));
        let qd = Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
        let m = mass_matrix(&p, &q);
        spd_ok &= m.cholesky().is_some() && (m - m.transpose()).amax() < 1e-12;
        let dm = mass_matrix_derivatives(&p, &q);
        let mut mdot = nalgebra::Matrix3::zeros();
        for r in 0..3 {
            mdot += dm[r] * qd[r];
        }
        let s = mdot - 2.0 * coriolis_matrix(&p, &q, &qd);
        worst_skew = worst_skew.max((s + s.transpose()).amax());
    }
    check(
        "simdyn_mass_matrix_structure",
        spd_ok && worst_skew < 1e-8,
        format!(
            "SPD at 1000 configurations: {spd_ok}; worst skew-symmetry residual {worst_skew:.3e} (tol 1e-8)"
        ),
    )
}

/// Runs every oracle check; each entry reports pass/fail with a detail line.
pub fn run_all() -> Result<Vec<OracleCheck>> {
    Ok(vec![
        gp_gradient_check()?,
        bnn_elbo_gradient_check()?,
        regressor_consistency_check(),
        energy_conservation_check()?,
        structure_check(),
    ])
}

#[cfg(test)]
mod tests {
    use super::run_all;

    #[test]
    fn all_oracles_pass() {
        let checks = run_all().expect("oracle suite runs");
        assert_eq!(checks.len(), 5);
        for c in &checks {
            assert!(c.passed, "{} failed: {}", c.name, c.detail);
        }
    }
}
