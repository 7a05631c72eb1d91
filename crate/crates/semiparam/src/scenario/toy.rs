//! 1-D toy regression problem: a four-term analytic model plus a local
//! Gaussian deviation and observation noise.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFn, BasisModel, ClosureBasis};
use crate::dataset::{Dataset, SplitTag};
use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub theta_true: [f64; 4],
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_range: (f64, f64),
    pub extrap_ranges: [(f64, f64); 2],
    pub dev_center: f64,
    pub dev_amplitude: f64,
    pub dev_width: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            theta_true: [2.0, -1.5, 3.0, 2.4],
            noise_sigma: 0.5,
            n_train: 400,
            n_test: 400,
            train_range: (0.0, 12.0),
            extrap_ranges: [(-4.0, 0.0), (12.0, 16.0)],
            dev_center: 2.5,
            dev_amplitude: 6.0,
            dev_width: 0.4,
            seed: 0,
        }
    }
}

/// The toy feature map (sin 2x, x, 1, 0.09 x^2).
pub fn toy_basis() -> Arc<dyn BasisFn> {
    Arc::new(ClosureBasis::new("toy", 1, 1, 4, |x: &[f64]| {
        DMatrix::from_row_slice(1, 4, &[(2.0 * x[0]).sin(), x[0], 1.0, 0.09 * x[0] * x[0]])
    }))
}

pub fn toy_model(theta: DVector<f64>) -> BasisModel {
    BasisModel::new(toy_basis(), theta).expect("toy basis takes 4 coefficients")
}

pub struct ToyData {
    pub train: Dataset,
    pub interp_test: Dataset,
    pub extrap_test: Dataset,
    /// The analytic model with true coefficients (generator ground truth).
    pub true_model: BasisModel,
}

/// Local smooth deviation around `dev_center`.
pub fn deviation(cfg: &ToyConfig, x: f64) -> f64 {
    let z = (x - cfg.dev_center) / cfg.dev_width;
    cfg.dev_amplitude * (-0.5 * z * z).exp()
}

pub fn toy_generate(cfg: &ToyConfig) -> Result<ToyData> {
    let model = toy_model(DVector::from_row_slice(&cfg.theta_true));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();

    let sample = |xs: Vec<f64>, tag, name: &str, rng: &mut ChaCha8Rng| -> Result<Dataset> {
        let n = xs.len();
        let inputs = DMatrix::from_fn(n, 1, |r, _| xs[r]);
        let mut targets = DMatrix::zeros(n, 1);
        for r in 0..n {
            let x = xs[r];
            let eps = if cfg.noise_sigma > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            targets[(r, 0)] = model.predict_one(&[x])?[0] + deviation(cfg, x) + eps;
        }
        Dataset::new(inputs, targets, tag, name)
    };

    let uniform = |n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    };

    let train_x = uniform(cfg.n_train, cfg.train_range.0, cfg.train_range.1, &mut rng);
    let train = sample(train_x, SplitTag::Train, "toy_train", &mut rng)?;

    let interp_x = uniform(cfg.n_test, cfg.train_range.0, cfg.train_range.1, &mut rng);
    let interp_test = sample(interp_x, SplitTag::InterpTest, "toy_interp", &mut rng)?;

    let mut extrap_x = Vec::with_capacity(cfg.n_test);
    let widths = [
        cfg.extrap_ranges[0].1 - cfg.extrap_ranges[0].0,
        cfg.extrap_ranges[1].1 - cfg.extrap_ranges[1].0,
    ];
    let p_first = widths[0] / (widths[0] + widths[1]);
    for _ in 0..cfg.n_test {
        let (lo, hi) = if rng.gen::<f64>() < p_first {
            cfg.extrap_ranges[0]
        } else {
            cfg.extrap_ranges[1]
        };
        extrap_x.push(rng.gen_range(lo..hi));
    }
    let extrap_test = sample(extrap_x, SplitTag::ExtrapTest, "toy_extrap", &mut rng)?;

    Ok(ToyData {
        train,
        interp_test,
        extrap_test,
        true_model: model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noise_free_model_value_at_zero() {
        let cfg = ToyConfig {
            noise_sigma: 0.0,
            dev_amplitude: 0.0,
            ..Default::default()
        };
        let model = toy_model(DVector::from_row_slice(&cfg.theta_true));
        assert_abs_diff_eq!(model.predict_one(&[0.0]).unwrap()[0], 3.0);
    }

    #[test]
    fn deviation_peaks_at_center() {
        let cfg = ToyConfig::default();
        assert_abs_diff_eq!(deviation(&cfg, cfg.dev_center), cfg.dev_amplitude);
        assert!(deviation(&cfg, cfg.dev_center + 1.0) < cfg.dev_amplitude);
    }

    #[test]
    fn sample_counts_and_ranges() {
        let cfg = ToyConfig::default();
        let data = toy_generate(&cfg).unwrap();
        assert_eq!(data.train.len(), 400);
        for v in data.train.inputs().iter() {
            assert!((0.0..12.0).contains(v));
        }
        for v in data.extrap_test.inputs().iter() {
            assert!(
                (-4.0..0.0).contains(v) || (12.0..16.0).contains(v),
                "extrap sample {v} inside training range"
            );
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let cfg = ToyConfig::default();
        let a = toy_generate(&cfg).unwrap();
        let b = toy_generate(&cfg).unwrap();
        assert_eq!(a.train.inputs(), b.train.inputs());
        assert_eq!(a.train.targets(), b.train.targets());
        let c = toy_generate(&ToyConfig {
            seed: 1,
            ..cfg
        })
        .unwrap();
        assert_ne!(a.train.inputs(), c.train.inputs());
    }
}
