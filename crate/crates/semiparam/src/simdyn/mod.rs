//! Simulated planar 3-link arm: closed-form rigid-body dynamics, a grouped
//! linear-in-parameters regressor with numerical base-parameter reduction,
//! mismatch-torque injection (unmodeled local friction and gear ripple),
//! an inverse-dynamics excitation controller and dataset construction.

pub mod dynamics;
pub mod regressor;
pub mod rollout;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dynamics::{
    coriolis_matrix, forward_dynamics, gravity_torque, inverse_dynamics, mass_matrix,
    mass_matrix_derivatives, total_energy,
};
pub use regressor::{
    base_param_reduction, raw_theta, regressor, simdyn_basis, BaseParamReduction, SimdynBasis,
    NUM_RAW_PARAMS,
};
pub use rollout::{build_datasets, simulate_rollout, ControllerConfig, RolloutRecord, SimdynSplits};

/// Width of the tanh Coulomb-friction smoothing (rad/s).
pub const SMOOTH_SIGN_WIDTH: f64 = 0.01;

/// Smoothed sign function used for Coulomb friction in plant and regressor.
pub fn smooth_sign(v: f64) -> f64 {
    (v / SMOOTH_SIGN_WIDTH).tanh()
}

/// Physical parameters of the planar 3R arm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotParams {
    pub lengths: [f64; 3],
    pub masses: [f64; 3],
    /// COM distance along each link (m).
    pub com: [f64; 3],
    /// Rotational inertia about each COM (kg m^2).
    pub inertia: [f64; 3],
    pub viscous: [f64; 3],
    pub coulomb: [f64; 3],
    /// In-plane gravitational acceleration along -y (m/s^2).
    pub gravity: f64,
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if self.lengths[i] <= 0.0 || self.masses[i] <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "link {i}: length and mass must be positive"
                )));
            }
            if self.com[i] < 0.0 || self.com[i] > self.lengths[i] {
                return Err(Error::InvalidConfig(format!(
                    "link {i}: COM must lie on the link"
                )));
            }
            if self.inertia[i] < 0.0 {
                return Err(Error::InvalidConfig(format!("link {i}: negative inertia")));
            }
        }
        Ok(())
    }

    /// Ground-truth plant: uniform slender rods with plausible magnitudes.
    pub fn ground_truth() -> Self {
        let lengths = [1.0, 0.8, 0.6];
        let masses = [3.0, 2.0, 1.0];
        Self {
            lengths,
            masses,
            com: [lengths[0] / 2.0, lengths[1] / 2.0, lengths[2] / 2.0],
            inertia: std::array::from_fn(|i| masses[i] * lengths[i] * lengths[i] / 12.0),
            viscous: [0.5, 0.4, 0.3],
            coulomb: [0.3, 0.2, 0.1],
            gravity: 9.81,
        }
    }
}

/// Which unmodeled effects the plant carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchMode {
    /// Local: strong friction zone on joint 0 only.
    Local,
    /// Global + local: gear-ripple torque on every joint plus the local zone.
    GlobalPlusLocal,
}

/// Unmodeled torque configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MismatchConfig {
    pub mode: MismatchMode,
    /// Joint-0 position zone of the local friction (rad).
    pub zone: [f64; 2],
    /// Magnitude of the local friction torque (N m).
    pub c_loc: f64,
    /// Ripple amplitudes and harmonic multiples, with the virtual gear ratio.
    pub a1: f64,
    pub a2: f64,
    pub h1: f64,
    pub h2: f64,
    pub gear: f64,
}

impl MismatchConfig {
    pub fn new(mode: MismatchMode) -> Self {
        Self {
            mode,
            zone: [0.15, 0.25],
            c_loc: 15.0,
            a1: 6.0,
            a2: 2.0,
            h1: 2.0,
            h2: 8.0,
            gear: 30.0,
        }
    }
}

/// Additive unmodeled torque: local friction against the joint-0 motion
/// inside the zone, plus (in global mode) per-joint gear ripple
/// e_i = a1 sin(h1 M q_i) + a2 sin(h2 M q_i).
pub fn mismatch_torque(
    cfg: &MismatchConfig,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
) -> Vector3<f64> {
    let mut tau = Vector3::zeros();
    if q[0] >= cfg.zone[0] && q[0] <= cfg.zone[1] {
        tau[0] -= cfg.c_loc * smooth_sign(qd[0]);
    }
    if cfg.mode == MismatchMode::GlobalPlusLocal {
        for i in 0..3 {
            tau[i] += cfg.a1 * (cfg.h1 * cfg.gear * q[i]).sin()
                + cfg.a2 * (cfg.h2 * cfg.gear * q[i]).sin();
        }
    }
    tau
}

/// The controller's internal raw model: ground-truth raw parameters scaled
/// by seeded per-coefficient factors in [0.8, 1.2].
pub fn prior_theta(params: &RobotParams, seed: u64) -> DVector<f64> {
    let truth = raw_theta(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(truth.len(), |i, _| truth[i] * rng.gen_range(0.8..1.2))
}
