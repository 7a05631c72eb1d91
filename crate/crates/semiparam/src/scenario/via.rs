//! Variable impedance actuator scenario: spring-damper torque model, chirp
//! telemetry (loaded or synthesized), and instantaneous / auto-regressive
//! dataset construction.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFn, BasisModel, ClosureBasis};
use crate::dataset::{Dataset, SplitTag};
use crate::error::{Error, Result};

/// Telemetry after resampling: position difference, velocity difference and
/// link-side torque on a uniform time grid.
#[derive(Debug, Clone)]
pub struct ViaTelemetry {
    pub t: Vec<f64>,
    pub dq: Vec<f64>,
    pub dqd: Vec<f64>,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ViaConfig {
    /// Auto-regressive history length (past steps in addition to the current one).
    pub history: usize,
    pub split_fraction: f64,
    /// Optimization start for (K, D).
    pub theta_init: [f64; 2],
    pub synthetic: ViaSyntheticConfig,
}

impl Default for ViaConfig {
    fn default() -> Self {
        Self {
            history: 4,
            split_fraction: 0.64,
            theta_init: [300.0, 20.0],
            synthetic: ViaSyntheticConfig::default(),
        }
    }
}

/// Ground-truth constants of the synthetic spring-damper-friction substitute.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ViaSyntheticConfig {
    pub stiffness: f64,
    pub damping: f64,
    pub inertia: f64,
    pub chirp_amplitude: f64,
    pub chirp_duration: f64,
    pub chirp_f_end: f64,
    pub coulomb_friction: f64,
    pub viscous_friction: f64,
    pub stribeck_velocity: f64,
    /// Amplitude of the smooth hysteretic torque of the elastic element; this
    /// is the deviation a non-parametric residual has to learn.
    pub hysteresis_torque: f64,
    /// Deflection-rate scale at which the hysteresis driver saturates.
    pub hysteresis_velocity: f64,
    /// Fast relaxation time of the hysteresis state (s).
    pub hysteresis_time: f64,
    /// Slow relaxation time; the deviation is the difference of the fast and
    /// slow states, so it is transient and carries no static offset.
    pub hysteresis_time_slow: f64,
    pub torque_noise_sigma: f64,
}

impl Default for ViaSyntheticConfig {
    fn default() -> Self {
        Self {
            stiffness: 400.0,
            damping: 10.0,
            inertia: 0.01,
            chirp_amplitude: 0.5,
            chirp_duration: 60.0,
            chirp_f_end: 3.0,
            coulomb_friction: 1.5,
            viscous_friction: 0.2,
            stribeck_velocity: 0.01,
            hysteresis_torque: 8.0,
            hysteresis_velocity: 0.05,
            hysteresis_time: 0.0075,
            hysteresis_time_slow: 0.03,
            torque_noise_sigma: 0.05,
        }
    }
}

/// Spring-damper torque model tau = K dq + D dqd over the first two input
/// columns; auto-regressive inputs carry the history in later columns.
pub fn via_basis(dim_in: usize) -> Arc<dyn BasisFn> {
    assert!(dim_in >= 2);
    Arc::new(ClosureBasis::new("via", dim_in, 1, 2, |x: &[f64]| {
        DMatrix::from_row_slice(1, 2, &[x[0], x[1]])
    }))
}

pub fn via_model(dim_in: usize, theta: [f64; 2]) -> BasisModel {
    BasisModel::new(via_basis(dim_in), DVector::from_row_slice(&theta))
        .expect("via basis takes 2 coefficients")
}

/// Simulates the motor-side chirp excitation of a spring-damper joint with
/// smooth stick-slip friction on the link and a smooth hysteretic torque in
/// the elastic element. 1 kHz RK4 integration, resampled to 100 Hz.
///
/// The recorded torque is the transmitted elastic torque
/// K dq + D dqd + tau_hyst (plus sensor noise): the spring-damper model plus
/// a deviation whose state depends on the recent deflection-rate history, so
/// it is invisible to instantaneous inputs but recoverable from
/// auto-regressive ones. Link friction shapes the motion only.
pub fn via_synthetic_generate(cfg: &ViaSyntheticConfig, seed: u64) -> ViaTelemetry {
    let dt = 1e-3;
    let steps = (cfg.chirp_duration / dt) as usize;
    let f0 = 0.0;
    let rate = (cfg.chirp_f_end - f0) / cfg.chirp_duration;

    // linear chirp: phase psi(t) = 2 pi (f0 t + rate t^2 / 2)
    let motor_pos = |t: f64| cfg.chirp_amplitude * (2.0 * std::f64::consts::PI * (f0 * t + 0.5 * rate * t * t)).sin();
    let motor_vel = |t: f64| {
        let psi = 2.0 * std::f64::consts::PI * (f0 * t + 0.5 * rate * t * t);
        let psid = 2.0 * std::f64::consts::PI * (f0 + rate * t);
        cfg.chirp_amplitude * psi.cos() * psid
    };

    // transmitted torque of the elastic element; the deviation is the
    // transient part of the relaxation states
    let elastic = |t: f64, q: f64, qd: f64, h1: f64, h2: f64| -> f64 {
        let dq = motor_pos(t) - q;
        let dqd = motor_vel(t) - qd;
        cfg.stiffness * dq + cfg.damping * dqd + cfg.hysteresis_torque * (h1 - h2)
    };

    // state derivative for (q, qd, h1, h2)
    let deriv = |t: f64, q: f64, qd: f64, h1: f64, h2: f64| -> (f64, f64, f64, f64) {
        let friction = cfg.coulomb_friction * (qd / cfg.stribeck_velocity).tanh()
            + cfg.viscous_friction * qd;
        let qdd = (elastic(t, q, qd, h1, h2) - friction) / cfg.inertia;
        let dqd = motor_vel(t) - qd;
        // saturated driver relaxed through a fast and a slow state: their
        // difference is a transient torque concentrated around deflection-rate
        // zero crossings, i.e. a hysteresis loop that instantaneous features
        // cannot resolve
        let driver = (dqd / cfg.hysteresis_velocity).tanh();
        let h1d = (driver - h1) / cfg.hysteresis_time.max(1e-6);
        let h2d = (driver - h2) / cfg.hysteresis_time_slow.max(1e-6);
        (qd, qdd, h1d, h2d)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.torque_noise_sigma.max(f64::MIN_POSITIVE)).unwrap();

    let mut q = 0.0;
    let mut qd = 0.0;
    let mut h1 = 0.0;
    let mut h2 = 0.0;
    // (t, dq, dqd, deviation, noise)
    let mut raw: Vec<(f64, f64, f64, f64, f64)> = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        let dq = motor_pos(t) - q;
        let dqd = motor_vel(t) - qd;
        let dev = cfg.hysteresis_torque * (h1 - h2);
        let eps = if cfg.torque_noise_sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        raw.push((t, dq, dqd, dev, eps));

        // RK4 on (q, qd, h1, h2)
        let (k1q, k1v, k1a, k1b) = deriv(t, q, qd, h1, h2);
        let (k2q, k2v, k2a, k2b) = deriv(
            t + 0.5 * dt,
            q + 0.5 * dt * k1q,
            qd + 0.5 * dt * k1v,
            h1 + 0.5 * dt * k1a,
            h2 + 0.5 * dt * k1b,
        );
        let (k3q, k3v, k3a, k3b) = deriv(
            t + 0.5 * dt,
            q + 0.5 * dt * k2q,
            qd + 0.5 * dt * k2v,
            h1 + 0.5 * dt * k2a,
            h2 + 0.5 * dt * k2b,
        );
        let (k4q, k4v, k4a, k4b) = deriv(
            t + dt,
            q + dt * k3q,
            qd + dt * k3v,
            h1 + dt * k3a,
            h2 + dt * k3b,
        );
        q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        qd += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        h1 += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        h2 += dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
    }

    // Define the deviation as the component of the hysteretic torque that is
    // orthogonal to the spring-damper basis: subtract its least-squares
    // projection onto (dq, dqd) window by window, so the nominal (K, D)
    // remain the population-level linear fit over any contiguous stretch of
    // the sweep and stay identifiable.
    let window = (2.0 / dt) as usize;
    let mut dev_orth = vec![0.0; raw.len()];
    for (w, chunk) in raw.chunks(window).enumerate() {
        let n = chunk.len().max(1) as f64;
        let (mut sqq, mut sqv, mut svv, mut sqr, mut svr) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(_, dq, dqd, dev, _) in chunk {
            sqq += dq * dq;
            sqv += dq * dqd;
            svv += dqd * dqd;
            sqr += dq * dev;
            svr += dqd * dev;
        }
        let det = (sqq * svv - sqv * sqv).max(f64::MIN_POSITIVE) / n;
        let a = (svv * sqr - sqv * svr) / n / det;
        let b = (sqq * svr - sqv * sqr) / n / det;
        for (i, &(_, dq, dqd, dev, _)) in chunk.iter().enumerate() {
            dev_orth[w * window + i] = dev - a * dq - b * dqd;
        }
    }

    // 1 kHz -> 100 Hz
    let mut out = ViaTelemetry {
        t: Vec::new(),
        dq: Vec::new(),
        dqd: Vec::new(),
        tau: Vec::new(),
    };
    for (k, &(t, dq, dqd, _, eps)) in raw.iter().enumerate().step_by(10) {
        let tau = cfg.stiffness * dq + cfg.damping * dqd + dev_orth[k] + eps;
        out.t.push(t);
        out.dq.push(dq);
        out.dqd.push(dqd);
        out.tau.push(tau);
    }
    out
}

/// Reads `t,dq,dqd,tau` telemetry CSV (seconds, rad, rad/s, N m).
pub fn telemetry_read_csv(path: &Path) -> Result<ViaTelemetry> {
    use std::io::BufRead;
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines.next().ok_or(Error::CsvParse {
        line: 1,
        msg: "missing header".into(),
    })??;
    if header.trim() != "t,dq,dqd,tau" {
        return Err(Error::CsvParse {
            line: 1,
            msg: format!("expected header t,dq,dqd,tau, got {header}"),
        });
    }
    let mut out = ViaTelemetry {
        t: Vec::new(),
        dq: Vec::new(),
        dqd: Vec::new(),
        tau: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.trim().split(',').map(|v| v.parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::CsvParse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        if vals.len() != 4 {
            return Err(Error::CsvParse {
                line: i + 2,
                msg: format!("expected 4 fields, got {}", vals.len()),
            });
        }
        out.t.push(vals[0]);
        out.dq.push(vals[1]);
        out.dqd.push(vals[2]);
        out.tau.push(vals[3]);
    }
    Ok(out)
}

pub fn telemetry_write_csv(telemetry: &ViaTelemetry, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "t,dq,dqd,tau")?;
    for i in 0..telemetry.t.len() {
        writeln!(
            file,
            "{:?},{:?},{:?},{:?}",
            telemetry.t[i], telemetry.dq[i], telemetry.dqd[i], telemetry.tau[i]
        )?;
    }
    Ok(())
}

pub struct ViaDatasets {
    pub instant_train: Dataset,
    pub instant_test: Dataset,
    pub ar_train: Dataset,
    pub ar_test: Dataset,
}

/// Builds instantaneous and auto-regressive regression problems from telemetry.
///
/// The chronological split happens before windowing; auto-regressive training
/// rows use only training-side samples and therefore lose the first `history`
/// rows.
pub fn via_build_datasets(cfg: &ViaConfig, telemetry: &ViaTelemetry) -> Result<ViaDatasets> {
    let n = telemetry.t.len();
    let h = cfg.history;
    if n < h + 2 {
        return Err(Error::InvalidConfig(format!(
            "telemetry has {n} samples, need at least {}",
            h + 2
        )));
    }
    let split = (n as f64 * cfg.split_fraction).floor() as usize;
    if split <= h || split >= n {
        return Err(Error::InvalidConfig(format!(
            "split index {split} out of range for {n} samples with history {h}"
        )));
    }

    let instant = |range: std::ops::Range<usize>, tag, name: &str| -> Result<Dataset> {
        let rows: Vec<usize> = range.collect();
        let inputs = DMatrix::from_fn(rows.len(), 2, |r, c| match c {
            0 => telemetry.dq[rows[r]],
            _ => telemetry.dqd[rows[r]],
        });
        let targets = DMatrix::from_fn(rows.len(), 1, |r, _| telemetry.tau[rows[r]]);
        Dataset::new(inputs, targets, tag, name)
    };

    // window layout: (dq, dqd) for t, t-1, ..., t-h
    let ar = |range: std::ops::Range<usize>, tag, name: &str| -> Result<Dataset> {
        let rows: Vec<usize> = range.collect();
        let inputs = DMatrix::from_fn(rows.len(), 2 * (h + 1), |r, c| {
            let lag = c / 2;
            let idx = rows[r] - lag;
            if c % 2 == 0 {
                telemetry.dq[idx]
            } else {
                telemetry.dqd[idx]
            }
        });
        let targets = DMatrix::from_fn(rows.len(), 1, |r, _| telemetry.tau[rows[r]]);
        Dataset::new(inputs, targets, tag, name)
    };

    Ok(ViaDatasets {
        instant_train: instant(0..split, SplitTag::Train, "via_instant_train")?,
        instant_test: instant(split..n, SplitTag::InterpTest, "via_instant_test")?,
        ar_train: ar(h..split, SplitTag::Train, "via_ar_train")?,
        ar_test: ar(split..n, SplitTag::InterpTest, "via_ar_test")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parametric::lls_fit;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spring_damper_torque_values() {
        let m = via_model(2, [400.0, 10.0]);
        assert_abs_diff_eq!(m.predict_one(&[0.1, 0.2]).unwrap()[0], 42.0, epsilon = 1e-12);
        assert_eq!(m.predict_one(&[0.0, 0.0]).unwrap()[0], 0.0);

        let doubled = via_model(2, [800.0, 20.0]);
        assert_abs_diff_eq!(
            doubled.predict_one(&[0.1, 0.2]).unwrap()[0],
            84.0,
            epsilon = 1e-12
        );
    }

    fn short_synthetic(hysteresis: bool, noise: bool) -> ViaTelemetry {
        let cfg = ViaSyntheticConfig {
            chirp_duration: 10.0,
            hysteresis_torque: if hysteresis { 8.0 } else { 0.0 },
            torque_noise_sigma: if noise { 0.05 } else { 0.0 },
            ..Default::default()
        };
        via_synthetic_generate(&cfg, 42)
    }

    #[test]
    fn hysteresis_free_lls_recovers_k_and_d() {
        // link friction shapes the motion but not the recorded torque, so
        // without the elastic hysteresis the model class is exact
        let telemetry = short_synthetic(false, false);
        let cfg = ViaConfig::default();
        let ds = via_build_datasets(&cfg, &telemetry).unwrap();
        let model = via_model(2, [300.0, 20.0]);
        let report = lls_fit(&model, &ds.instant_train).unwrap();
        assert_abs_diff_eq!(report.coefficients[0], 400.0, epsilon = 0.5);
        assert_abs_diff_eq!(report.coefficients[1], 10.0, epsilon = 0.1);
    }

    #[test]
    fn hysteresis_causes_model_mismatch() {
        let telemetry = short_synthetic(true, false);
        let cfg = ViaConfig::default();
        let ds = via_build_datasets(&cfg, &telemetry).unwrap();
        let model = via_model(2, [300.0, 20.0]);
        let report = lls_fit(&model, &ds.instant_train).unwrap();
        assert!(
            report.train_rmse[0] > 0.2,
            "expected visible residual, got {}",
            report.train_rmse[0]
        );
    }

    #[test]
    fn window_alignment_and_row_counts() {
        let telemetry = short_synthetic(true, true);
        let cfg = ViaConfig::default();
        let n = telemetry.t.len();
        let split = (n as f64 * 0.64).floor() as usize;
        let ds = via_build_datasets(&cfg, &telemetry).unwrap();
        assert_eq!(ds.instant_train.len(), split);
        assert_eq!(ds.ar_train.len(), split - cfg.history);
        // AR row r covers time r + H; its leading pair is the instantaneous
        // row at that time, its trailing pair the instantaneous row r.
        for r in [0usize, 5, 50] {
            let t = r + cfg.history;
            assert_eq!(ds.ar_train.inputs()[(r, 0)], ds.instant_train.inputs()[(t, 0)]);
            assert_eq!(ds.ar_train.inputs()[(r, 1)], ds.instant_train.inputs()[(t, 1)]);
            let last = 2 * cfg.history;
            assert_eq!(ds.ar_train.inputs()[(r, last)], ds.instant_train.inputs()[(r, 0)]);
            assert_eq!(
                ds.ar_train.inputs()[(r, last + 1)],
                ds.instant_train.inputs()[(r, 1)]
            );
        }
    }

    #[test]
    fn zero_history_degenerates_to_instantaneous() {
        let telemetry = short_synthetic(false, false);
        let cfg = ViaConfig {
            history: 0,
            ..Default::default()
        };
        let ds = via_build_datasets(&cfg, &telemetry).unwrap();
        assert_eq!(ds.ar_train.inputs(), ds.instant_train.inputs());
        assert_eq!(ds.ar_test.inputs(), ds.instant_test.inputs());
    }

    #[test]
    fn telemetry_csv_round_trip() {
        let telemetry = ViaTelemetry {
            t: vec![0.0, 0.01],
            dq: vec![0.1, 0.2],
            dqd: vec![-0.3, 0.4],
            tau: vec![40.0, 82.5],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tele.csv");
        telemetry_write_csv(&telemetry, &path).unwrap();
        let back = telemetry_read_csv(&path).unwrap();
        assert_eq!(back.tau, telemetry.tau);
        assert_eq!(back.dq, telemetry.dq);
    }

    #[test]
    fn too_short_telemetry_is_an_error() {
        let telemetry = ViaTelemetry {
            t: vec![0.0, 0.01],
            dq: vec![0.0; 2],
            dqd: vec![0.0; 2],
            tau: vec![0.0; 2],
        };
        assert!(via_build_datasets(&ViaConfig::default(), &telemetry).is_err());
    }
}
