//! Bayes-by-backprop networks: plain BNN and the model-based BaMbANN variant
//! whose output sums a dense path with a variational parametric-model path.

mod model;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisModel;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::Prediction;
use crate::optim::{AdamParams, AdamState};
use crate::scaler::StandardScaler;

pub use model::{
    kl_gaussian, softplus, softplus_inv, Activation, BambannModel, ModelPath,
    VariationalDenseLayer, WeightSample,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BnnConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// sigma_obs = factor * std(y_train) unless overridden.
    pub sigma_obs_factor: f64,
    pub sigma_obs2_override: Option<f64>,
    pub dense_prior_sigma: f64,
    pub model_prior_sigma: f64,
    pub init_mu_sigma: f64,
    pub init_sigma: f64,
    pub predict_samples: usize,
}

impl Default for BnnConfig {
    fn default() -> Self {
        Self {
            hidden_width: 64,
            hidden_layers: 3,
            epochs: 2000,
            batch_size: 128,
            learning_rate: 1e-3,
            sigma_obs_factor: 0.05,
            sigma_obs2_override: None,
            dense_prior_sigma: 0.1,
            model_prior_sigma: 10.0,
            init_mu_sigma: 0.05,
            init_sigma: 0.01,
            predict_samples: 30,
        }
    }
}

/// Builds an untrained network. `basis_model` carries the scenario's
/// theta_init as both the posterior-mean init and the prior mean of the model
/// path; `None` gives the plain BNN.
pub fn bnn_build(
    dim_in: usize,
    dim_out: usize,
    basis_model: Option<BasisModel>,
    train_inputs: &DMatrix<f64>,
    train_targets: &DMatrix<f64>,
    cfg: &BnnConfig,
    seed: u64,
) -> Result<BambannModel> {
    if let Some(m) = &basis_model {
        if m.basis().dim_in() != dim_in || m.basis().dim_out() != dim_out {
            return Err(Error::InvalidConfig(format!(
                "basis model is {}->{} but the network is {}->{}",
                m.basis().dim_in(),
                m.basis().dim_out(),
                dim_in,
                dim_out
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(cfg.hidden_layers + 1);
    let mut fan_in = dim_in;
    for _ in 0..cfg.hidden_layers {
        layers.push(VariationalDenseLayer::new(
            fan_in,
            cfg.hidden_width,
            cfg.dense_prior_sigma,
            cfg.init_mu_sigma,
            cfg.init_sigma,
            Activation::Elu,
            &mut rng,
        ));
        fan_in = cfg.hidden_width;
    }
    layers.push(VariationalDenseLayer::new(
        fan_in,
        dim_out,
        cfg.dense_prior_sigma,
        cfg.init_mu_sigma,
        cfg.init_sigma,
        Activation::Linear,
        &mut rng,
    ));

    let sigma_obs2 = match cfg.sigma_obs2_override {
        Some(v) => {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("sigma_obs2 must be > 0, got {v}")));
            }
            v
        }
        None => {
            let n = train_targets.nrows() as f64;
            let mut pooled = 0.0;
            for c in 0..train_targets.ncols() {
                let col = train_targets.column(c);
                let mean = col.sum() / n;
                pooled += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            }
            let std = (pooled / train_targets.ncols() as f64).sqrt().max(1e-8);
            let s = cfg.sigma_obs_factor * std;
            s * s
        }
    };

    Ok(BambannModel {
        layers,
        model_path: basis_model
            .map(|m| ModelPath::new(m, cfg.init_sigma, cfg.model_prior_sigma)),
        scaler: StandardScaler::fit(train_inputs),
        sigma_obs2,
        dim_in,
        dim_out,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BnnTrainReport {
    pub final_loss: f64,
    pub epochs: usize,
    pub steps: usize,
}

/// Adam loop over shuffled minibatches with one weight sample per step.
/// Deterministic given the seed.
pub fn bnn_train(
    model: &mut BambannModel,
    data: &Dataset,
    cfg: &BnnConfig,
    seed: u64,
) -> Result<BnnTrainReport> {
    let inputs = data.inputs();
    let targets = data.targets();
    let n = inputs.nrows();
    let batch = cfg.batch_size.min(n).max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6e_7472_6169_6eu64);
    let mut params = model.packed();
    let mut adam = AdamState::new(
        params.len(),
        AdamParams {
            lr: cfg.learning_rate,
            ..AdamParams::default()
        },
    );
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_loss = f64::NAN;
    let mut steps = 0;
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let bx = DMatrix::from_fn(chunk.len(), inputs.ncols(), |i, j| inputs[(chunk[i], j)]);
            let by = DMatrix::from_fn(chunk.len(), targets.ncols(), |i, j| targets[(chunk[i], j)]);
            model.set_packed(&params)?;
            let eval = model.elbo_loss(&bx, &by, n as f64 / chunk.len() as f64, &mut rng)?;
            if eval.value > 1e12 {
                return Err(Error::Diverged(format!(
                    "elbo loss {} at step {steps}",
                    eval.value
                )));
            }
            adam.step(&mut params, &eval.gradient)?;
            last_loss = eval.value;
            steps += 1;
        }
    }
    model.set_packed(&params)?;
    Ok(BnnTrainReport {
        final_loss: last_loss,
        epochs: cfg.epochs,
        steps,
    })
}

/// Predictive mean and population variance over `n_samples` forward samples.
pub fn bnn_predict(
    model: &BambannModel,
    inputs: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<Prediction> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    let n = inputs.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6e_7072_6564u64);
    let mut sum: DMatrix<f64> = DMatrix::zeros(n, model.dim_out);
    let mut sum_sq: DMatrix<f64> = DMatrix::zeros(n, model.dim_out);
    for _ in 0..n_samples {
        let sample = model.sample_weights(&mut rng);
        let tape = model.forward_batch(inputs, &sample)?;
        for r in 0..n {
            for o in 0..model.dim_out {
                let v = tape.dense_out[(o, r)] + tape.model_out[(o, r)];
                sum[(r, o)] += v;
                sum_sq[(r, o)] += v * v;
            }
        }
    }
    let k = n_samples as f64;
    let mean = sum / k;
    let variance = DMatrix::from_fn(n, model.dim_out, |r, o| {
        (sum_sq[(r, o)] / k - mean[(r, o)] * mean[(r, o)]).max(1e-12)
    });
    Prediction::with_variance(mean, variance)
}

/// Serializable snapshot of a trained network.
#[derive(Debug, Serialize, Deserialize)]
pub struct BnnSnapshot {
    pub layers: Vec<LayerSnapshot>,
    pub model_path: Option<PathSnapshot>,
    pub scaler: StandardScaler,
    pub sigma_obs2: f64,
    pub dim_in: usize,
    pub dim_out: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub shape: [usize; 2],
    pub w_mu: Vec<f64>,
    pub w_rho: Vec<f64>,
    pub b_mu: Vec<f64>,
    pub b_rho: Vec<f64>,
    pub prior_sigma: f64,
    pub activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PathSnapshot {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    pub prior_mean: Vec<f64>,
    pub prior_sigma: f64,
}

impl BnnSnapshot {
    pub fn from_model(model: &BambannModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerSnapshot {
                    shape: [l.w_mu.nrows(), l.w_mu.ncols()],
                    w_mu: l.w_mu.iter().copied().collect(),
                    w_rho: l.w_rho.iter().copied().collect(),
                    b_mu: l.b_mu.iter().copied().collect(),
                    b_rho: l.b_rho.iter().copied().collect(),
                    prior_sigma: l.prior_sigma,
                    activation: l.activation,
                })
                .collect(),
            model_path: model.model_path.as_ref().map(|p| PathSnapshot {
                mu: p.mu.iter().copied().collect(),
                rho: p.rho.iter().copied().collect(),
                prior_mean: p.model.coefficients().iter().copied().collect(),
                prior_sigma: p.prior_sigma,
            }),
            scaler: model.scaler.clone(),
            sigma_obs2: model.sigma_obs2,
            dim_in: model.dim_in,
            dim_out: model.dim_out,
        }
    }
}
