//! Excitation controller, RK4 rollout of the mismatched plant, and dataset
//! construction from noisy recorded positions.

use std::io::Write as IoWrite;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, SplitTag};
use crate::error::{Error, Result};

use super::dynamics::{
    coriolis_matrix, friction_torque, gravity_torque, mass_matrix,
};
use super::regressor::regressor;
use super::{mismatch_torque, MismatchConfig, RobotParams};

/// Inverse-dynamics excitation controller: high PD gains around a
/// two-sinusoid desired trajectory, feedforward through the internal
/// (raw-parameter) model `theta_hat`.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub kp: f64,
    pub kd: f64,
    /// Internal raw model coefficients (15), generally a perturbed prior.
    pub theta_hat: DVector<f64>,
    pub amplitude: [f64; 3],
    pub freq1: [f64; 3],
    pub freq2: [f64; 3],
    /// Constant offset added to the joint-0 desired position (rad).
    pub offset0: f64,
}

impl ControllerConfig {
    pub fn excitation(theta_hat: DVector<f64>, offset0: f64) -> Self {
        Self {
            kp: 3947.8,
            kd: 125.7,
            theta_hat,
            amplitude: [0.4, 0.2, 0.3],
            freq1: [0.28, 0.52, 0.26],
            freq2: [1.1, 2.3, 2.2],
            offset0,
        }
    }

    /// Desired position, velocity and acceleration at time `t`:
    /// q_i = A_i sin(2 pi f1_i t) + A_i/3 sin(2 pi f2_i t) (+ offset on 0).
    pub fn desired(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let mut q = Vector3::zeros();
        let mut qd = Vector3::zeros();
        let mut qdd = Vector3::zeros();
        for i in 0..3 {
            let (a, b) = (self.amplitude[i], self.amplitude[i] / 3.0);
            let w1 = 2.0 * std::f64::consts::PI * self.freq1[i];
            let w2 = 2.0 * std::f64::consts::PI * self.freq2[i];
            q[i] = a * (w1 * t).sin() + b * (w2 * t).sin();
            qd[i] = a * w1 * (w1 * t).cos() + b * w2 * (w2 * t).cos();
            qdd[i] = -a * w1 * w1 * (w1 * t).sin() - b * w2 * w2 * (w2 * t).sin();
        }
        q[0] += self.offset0;
        (q, qd, qdd)
    }
}

/// Uniform-rate record of a rollout: positions, velocities, accelerations
/// and commanded torques.
#[derive(Debug, Clone)]
pub struct RolloutRecord {
    pub dt: f64,
    pub q: Vec<Vector3<f64>>,
    pub qd: Vec<Vector3<f64>>,
    pub qdd: Vec<Vector3<f64>>,
    pub tau: Vec<Vector3<f64>>,
}

impl RolloutRecord {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// CSV with header `t,q0,q1,q2,qd0,...,tau2`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "t,q0,q1,q2,qd0,qd1,qd2,qdd0,qdd1,qdd2,tau0,tau1,tau2"
        )?;
        for s in 0..self.len() {
            write!(out, "{:.6}", self.time(s))?;
            for block in [&self.q[s], &self.qd[s], &self.qdd[s], &self.tau[s]] {
                for i in 0..3 {
                    write!(out, ",{:.17e}", block[i])?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Plant acceleration under an applied (held) command torque and the
/// state-dependent mismatch torque.
fn plant_accel(
    params: &RobotParams,
    mismatch: Option<&MismatchConfig>,
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    tau_cmd: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let mut tau = *tau_cmd;
    if let Some(cfg) = mismatch {
        tau += mismatch_torque(cfg, q, qd);
    }
    let rhs =
        tau - coriolis_matrix(params, q, qd) * qd - gravity_torque(params, q) - friction_torque(params, qd);
    mass_matrix(params, q)
        .cholesky()
        .map(|chol| chol.solve(&rhs))
        .ok_or_else(|| Error::SimulationAborted("mass matrix lost positive definiteness".into()))
}

const DIVERGENCE_SPEED: f64 = 1e3;

/// RK4 rollout at fixed step `dt` with zero-order-hold torque. The state
/// starts on the desired trajectory. Aborts when any joint speed exceeds
/// 1e3 rad/s.
pub fn simulate_rollout(
    params: &RobotParams,
    mismatch: Option<&MismatchConfig>,
    ctrl: &ControllerConfig,
    duration: f64,
    dt: f64,
) -> Result<RolloutRecord> {
    params.validate()?;
    if dt <= 0.0 || duration <= 0.0 {
        return Err(Error::InvalidConfig("rollout needs dt > 0, duration > 0".into()));
    }
    let steps = (duration / dt).round() as usize;
    let (mut q, mut qd, _) = ctrl.desired(0.0);
    let mut record = RolloutRecord {
        dt,
        q: Vec::with_capacity(steps),
        qd: Vec::with_capacity(steps),
        qdd: Vec::with_capacity(steps),
        tau: Vec::with_capacity(steps),
    };
    for step in 0..steps {
        let t = step as f64 * dt;
        let (q_des, qd_des, qdd_des) = ctrl.desired(t);
        let qdd_ref = qdd_des + ctrl.kp * (q_des - q) + ctrl.kd * (qd_des - qd);
        let tau_cmd_mat = regressor(&params.lengths, params.gravity, &q, &qd, &qdd_ref)
            * &ctrl.theta_hat;
        let tau_cmd = Vector3::new(tau_cmd_mat[0], tau_cmd_mat[1], tau_cmd_mat[2]);

        record.q.push(q);
        record.qd.push(qd);
        record
            .qdd
            .push(plant_accel(params, mismatch, &q, &qd, &tau_cmd)?);
        record.tau.push(tau_cmd);

        // classic RK4 on (q, qd) with the command torque held over the step
        let f = |q: &Vector3<f64>, qd: &Vector3<f64>| -> Result<Vector6<f64>> {
            let a = plant_accel(params, mismatch, q, qd, &tau_cmd)?;
            let mut out = Vector6::zeros();
            for i in 0..3 {
                out[i] = qd[i];
                out[3 + i] = a[i];
            }
            Ok(out)
        };
        let at = |q: &Vector3<f64>, qd: &Vector3<f64>, k: &Vector6<f64>, h: f64| {
            (
                Vector3::new(q[0] + h * k[0], q[1] + h * k[1], q[2] + h * k[2]),
                Vector3::new(qd[0] + h * k[3], qd[1] + h * k[4], qd[2] + h * k[5]),
            )
        };
        let k1 = f(&q, &qd)?;
        let (q2, qd2) = at(&q, &qd, &k1, 0.5 * dt);
        let k2 = f(&q2, &qd2)?;
        let (q3, qd3) = at(&q, &qd, &k2, 0.5 * dt);
        let k3 = f(&q3, &qd3)?;
        let (q4, qd4) = at(&q, &qd, &k3, dt);
        let k4 = f(&q4, &qd4)?;
        let incr = (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0);
        for i in 0..3 {
            q[i] += incr[i];
            qd[i] += incr[3 + i];
        }
        if qd.amax() > DIVERGENCE_SPEED || !q.iter().all(|v| v.is_finite()) {
            return Err(Error::SimulationAborted(format!(
                "divergence at t = {t:.3} s: |qd|_inf = {:.3e}",
                qd.amax()
            )));
        }
    }
    Ok(record)
}

/// Noisy differentiation of recorded positions: uniform +-`noise` position
/// noise, central differences at the record rate, every `subsample`-th
/// interior sample kept. Returns (times, inputs (q, qd, qdd), targets tau).
fn differentiate(
    record: &RolloutRecord,
    noise: f64,
    subsample: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = record.len();
    let noisy: Vec<Vector3<f64>> = record
        .q
        .iter()
        .map(|q| Vector3::from_fn(|i, _| q[i] + rng.gen_range(-noise..=noise)))
        .collect();
    let dt = record.dt;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut t_idx = 1;
    while t_idx + 1 < n {
        let qm = &noisy[t_idx - 1];
        let q0 = &noisy[t_idx];
        let qp = &noisy[t_idx + 1];
        let mut row = [0.0; 9];
        for i in 0..3 {
            row[i] = q0[i];
            row[3 + i] = (qp[i] - qm[i]) / (2.0 * dt);
            row[6 + i] = (qp[i] - 2.0 * q0[i] + qm[i]) / (dt * dt);
        }
        times.push(record.time(t_idx));
        rows.push(row);
        targets.push(record.tau[t_idx]);
        t_idx += subsample;
    }
    let inputs = DMatrix::from_fn(rows.len(), 9, |r, c| rows[r][c]);
    let tau = DMatrix::from_fn(targets.len(), 3, |r, c| targets[r][c]);
    (times, inputs, tau)
}

/// Train/interp/extrap datasets of one mismatch mode.
pub struct SimdynSplits {
    pub train: Dataset,
    pub interp: Dataset,
    pub extrap: Dataset,
}

/// Splits per the experimental protocol: the offset-0 rollout provides the
/// first half as training data and the second half as interpolation test
/// data; the second half of the offset rollout is the extrapolation test.
pub fn build_datasets(
    offset_zero: &RolloutRecord,
    offset_shift: &RolloutRecord,
    name: &str,
    noise: f64,
    subsample: usize,
    noise_seed: u64,
) -> Result<SimdynSplits> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let (times, inputs, targets) = differentiate(offset_zero, noise, subsample, &mut rng);
    let split_time = 0.5 * offset_zero.time(offset_zero.len());
    let first: Vec<usize> = (0..times.len()).filter(|&i| times[i] < split_time).collect();
    let second: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= split_time).collect();
    let pick = |idx: &[usize], m: &DMatrix<f64>| {
        DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
    };
    let train = Dataset::new(
        pick(&first, &inputs),
        pick(&first, &targets),
        SplitTag::Train,
        format!("{name}_train"),
    )?;
    let interp = Dataset::new(
        pick(&second, &inputs),
        pick(&second, &targets),
        SplitTag::InterpTest,
        format!("{name}_interp"),
    )?;
    let (times_s, inputs_s, targets_s) = differentiate(offset_shift, noise, subsample, &mut rng);
    let shift_split = 0.5 * offset_shift.time(offset_shift.len());
    let late: Vec<usize> = (0..times_s.len())
        .filter(|&i| times_s[i] >= shift_split)
        .collect();
    let extrap = Dataset::new(
        pick(&late, &inputs_s),
        pick(&late, &targets_s),
        SplitTag::ExtrapTest,
        format!("{name}_extrap"),
    )?;
    Ok(SimdynSplits {
        train,
        interp,
        extrap,
    })
}
