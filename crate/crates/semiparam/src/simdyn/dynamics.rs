//! Closed-form Lagrangian dynamics of the planar 3-link arm: mass matrix,
//! Christoffel Coriolis matrix, gravity vector and joint friction. This is
//! the "direct" formulation in physical link parameters; the grouped
//! linear-in-parameters regressor lives in `regressor.rs` and is checked
//! against this path numerically.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

use super::{smooth_sign, RobotParams};

/// Absolute link angles, their cosines/sines and the unit tangent vectors.
pub(super) struct Frame {
    /// Unit direction u(theta) = (cos, sin).
    pub u: [Vector2<f64>; 3],
    /// Tangent u'(theta) = (-sin, cos).
    pub up: [Vector2<f64>; 3],
}

impl Frame {
    pub fn new(q: &Vector3<f64>) -> Self {
        let mut theta = [0.0; 3];
        let mut acc = 0.0;
        for i in 0..3 {
            acc += q[i];
            theta[i] = acc;
        }
        let u = theta.map(|t| Vector2::new(t.cos(), t.sin()));
        let up = theta.map(|t| Vector2::new(-t.sin(), t.cos()));
        Self { u, up }
    }
}

/// d p_ci / d q_j for the COM of link `i` (zero when `j > i`).
fn com_jacobian(params: &RobotParams, frame: &Frame, i: usize, j: usize) -> Vector2<f64> {
    if j > i {
        return Vector2::zeros();
    }
    let mut a = params.com[i] * frame.up[i];
    for k in j..i {
        a += params.lengths[k] * frame.up[k];
    }
    a
}

/// d^2 p_ci / (d q_j d q_r); second derivatives replace u' by -u.
fn com_jacobian_deriv(
    params: &RobotParams,
    frame: &Frame,
    i: usize,
    j: usize,
    r: usize,
) -> Vector2<f64> {
    if j > i || r > i {
        return Vector2::zeros();
    }
    let mut b = params.com[i] * frame.u[i];
    for k in j.max(r)..i {
        b += params.lengths[k] * frame.u[k];
    }
    -b
}

/// Joint-space mass matrix M(q).
pub fn mass_matrix(params: &RobotParams, q: &Vector3<f64>) -> Matrix3<f64> {
    let frame = Frame::new(q);
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..=i {
            let aj = com_jacobian(params, &frame, i, j);
            for l in 0..=i {
                let al = com_jacobian(params, &frame, i, l);
                m[(j, l)] += params.masses[i] * aj.dot(&al) + params.inertia[i];
            }
        }
    }
    m
}

/// Partial derivatives dM/dq_r for r = 0, 1, 2 (analytic).
pub fn mass_matrix_derivatives(params: &RobotParams, q: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let frame = Frame::new(q);
    let mut dm = [Matrix3::zeros(); 3];
    for r in 0..3 {
        for i in 0..3 {
            for j in 0..=i {
                let aj = com_jacobian(params, &frame, i, j);
                let bj = com_jacobian_deriv(params, &frame, i, j, r);
                for l in 0..=i {
                    let al = com_jacobian(params, &frame, i, l);
                    let bl = com_jacobian_deriv(params, &frame, i, l, r);
                    dm[r][(j, l)] += params.masses[i] * (bj.dot(&al) + aj.dot(&bl));
                }
            }
        }
    }
    dm
}

/// Coriolis/centrifugal matrix in the Christoffel convention, so that
/// dM/dt - 2C is skew-symmetric.
pub fn christoffel_matrix(dm: &[Matrix3<f64>; 3], qd: &Vector3<f64>) -> Matrix3<f64> {
    let mut c = Matrix3::zeros();
    for j in 0..3 {
        for l in 0..3 {
            let mut acc = 0.0;
            for r in 0..3 {
                acc += 0.5 * (dm[r][(j, l)] + dm[l][(j, r)] - dm[j][(l, r)]) * qd[r];
            }
            c[(j, l)] = acc;
        }
    }
    c
}

pub fn coriolis_matrix(params: &RobotParams, q: &Vector3<f64>, qd: &Vector3<f64>) -> Matrix3<f64> {
    christoffel_matrix(&mass_matrix_derivatives(params, q), qd)
}

/// Gravity torque g(q) for in-plane gravity acting along -y.
pub fn gravity_torque(params: &RobotParams, q: &Vector3<f64>) -> Vector3<f64> {
    let frame = Frame::new(q);
    let mut g = Vector3::zeros();
    for j in 0..3 {
        for i in j..3 {
            g[j] += params.gravity * params.masses[i] * com_jacobian(params, &frame, i, j).y;
        }
    }
    g
}

/// Joint friction torque: viscous plus tanh-smoothed Coulomb.
pub fn friction_torque(params: &RobotParams, qd: &Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|i, _| params.viscous[i] * qd[i] + params.coulomb[i] * smooth_sign(qd[i]))
}

/// Inverse dynamics tau = M(q) qdd + C(q, qd) qd + g(q) + friction(qd).
pub fn inverse_dynamics(
    params: &RobotParams,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    qdd: &Vector3<f64>,
) -> Vector3<f64> {
    mass_matrix(params, q) * qdd
        + coriolis_matrix(params, q, qd) * qd
        + gravity_torque(params, q)
        + friction_torque(params, qd)
}

/// Forward dynamics: solve M(q) qdd = tau_applied - C qd - g - friction.
pub fn forward_dynamics(
    params: &RobotParams,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    tau_applied: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let m = mass_matrix(params, q);
    let rhs = tau_applied
        - coriolis_matrix(params, q, qd) * qd
        - gravity_torque(params, q)
        - friction_torque(params, qd);
    m.cholesky()
        .map(|chol| chol.solve(&rhs))
        .ok_or_else(|| Error::SimulationAborted("mass matrix lost positive definiteness".into()))
}

/// Total mechanical energy: kinetic plus gravitational potential (y datum at
/// the base joint).
pub fn total_energy(params: &RobotParams, q: &Vector3<f64>, qd: &Vector3<f64>) -> f64 {
    let kinetic = 0.5 * qd.dot(&(mass_matrix(params, q) * qd));
    let frame = Frame::new(q);
    let mut potential = 0.0;
    for i in 0..3 {
        let mut y = params.com[i] * frame.u[i].y;
        for k in 0..i {
            y += params.lengths[k] * frame.u[k].y;
        }
        potential += params.masses[i] * params.gravity * y;
    }
    kinetic + potential
}
