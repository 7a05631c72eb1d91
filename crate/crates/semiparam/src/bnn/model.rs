//! Variational network internals: layers, weight sampling, batched forward /
//! backward passes and the ELBO with analytic gradients.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::BasisModel;
use crate::error::{Error, Result};
use crate::optim::ObjectiveEvaluation;
use crate::scaler::StandardScaler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Elu,
    Linear,
}

pub(crate) fn elu(z: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

/// d elu / dz, written in terms of z.
fn elu_deriv(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        z.exp()
    }
}

pub fn softplus(rho: f64) -> f64 {
    // numerically safe ln(1 + e^rho)
    if rho > 30.0 {
        rho
    } else {
        rho.exp().ln_1p()
    }
}

/// Inverse of softplus; the rho giving a desired sigma.
pub fn softplus_inv(sigma: f64) -> f64 {
    if sigma > 30.0 {
        sigma
    } else {
        sigma.exp_m1().ln()
    }
}

fn sigmoid(rho: f64) -> f64 {
    1.0 / (1.0 + (-rho).exp())
}

/// KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)) for one scalar parameter.
pub fn kl_gaussian(mu_q: f64, sigma_q: f64, mu_p: f64, sigma_p: f64) -> f64 {
    (sigma_p / sigma_q).ln() + (sigma_q * sigma_q + (mu_q - mu_p) * (mu_q - mu_p)) / (2.0 * sigma_p * sigma_p)
        - 0.5
}

/// One fully-connected layer with an independent Gaussian posterior per weight
/// and bias, all sharing a zero-mean prior of width `prior_sigma`.
#[derive(Debug, Clone)]
pub struct VariationalDenseLayer {
    pub w_mu: DMatrix<f64>,
    pub w_rho: DMatrix<f64>,
    pub b_mu: DVector<f64>,
    pub b_rho: DVector<f64>,
    pub prior_sigma: f64,
    pub activation: Activation,
}

impl VariationalDenseLayer {
    pub fn new<R: Rng>(
        fan_in: usize,
        fan_out: usize,
        prior_sigma: f64,
        init_mu_sigma: f64,
        init_sigma: f64,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let rho0 = softplus_inv(init_sigma);
        Self {
            w_mu: DMatrix::from_fn(fan_out, fan_in, |_, _| {
                init_mu_sigma * rng.sample::<f64, _>(StandardNormal)
            }),
            w_rho: DMatrix::from_element(fan_out, fan_in, rho0),
            b_mu: DVector::zeros(fan_out),
            b_rho: DVector::from_element(fan_out, rho0),
            prior_sigma,
            activation,
        }
    }

    pub fn num_params(&self) -> usize {
        2 * (self.w_mu.len() + self.b_mu.len())
    }

    fn kl(&self) -> f64 {
        let mut total = 0.0;
        for (mu, rho) in self.w_mu.iter().zip(self.w_rho.iter()) {
            total += kl_gaussian(*mu, softplus(*rho), 0.0, self.prior_sigma);
        }
        for (mu, rho) in self.b_mu.iter().zip(self.b_rho.iter()) {
            total += kl_gaussian(*mu, softplus(*rho), 0.0, self.prior_sigma);
        }
        total
    }
}

/// Variational coefficients over the parametric basis model. The basis model's
/// own coefficient vector is the prior mean (the scenario's theta_init).
#[derive(Clone)]
pub struct ModelPath {
    pub model: BasisModel,
    pub mu: DVector<f64>,
    pub rho: DVector<f64>,
    pub prior_sigma: f64,
}

impl ModelPath {
    pub fn new(model: BasisModel, init_sigma: f64, prior_sigma: f64) -> Self {
        let m = model.coefficients().len();
        Self {
            mu: model.coefficients().clone(),
            rho: DVector::from_element(m, softplus_inv(init_sigma)),
            model,
            prior_sigma,
        }
    }

    fn kl(&self) -> f64 {
        let prior_mean = self.model.coefficients();
        self.mu
            .iter()
            .zip(self.rho.iter())
            .zip(prior_mean.iter())
            .map(|((mu, rho), pm)| kl_gaussian(*mu, softplus(*rho), *pm, self.prior_sigma))
            .sum()
    }
}

/// The noise draws of one reparameterized weight sample, retained so the
/// backward pass (and finite-difference oracles) can replay the sample.
#[derive(Debug, Clone)]
pub struct WeightSample {
    pub layer_eps: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub model_eps: Option<DVector<f64>>,
}

/// BaMbANN when `model_path` is present, a plain BNN otherwise. The dense path
/// consumes scaled inputs; the model path consumes raw inputs.
#[derive(Clone)]
pub struct BambannModel {
    pub layers: Vec<VariationalDenseLayer>,
    pub model_path: Option<ModelPath>,
    pub scaler: StandardScaler,
    pub sigma_obs2: f64,
    pub dim_in: usize,
    pub dim_out: usize,
}

impl BambannModel {
    pub fn sample_weights<R: Rng>(&self, rng: &mut R) -> WeightSample {
        // dense first, model path last: stripping the model path then leaves
        // the dense draws untouched for a given rng state
        let layer_eps = self
            .layers
            .iter()
            .map(|l| {
                (
                    DMatrix::from_fn(l.w_mu.nrows(), l.w_mu.ncols(), |_, _| {
                        rng.sample::<f64, _>(StandardNormal)
                    }),
                    DVector::from_fn(l.b_mu.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal)),
                )
            })
            .collect();
        let model_eps = self.model_path.as_ref().map(|p| {
            DVector::from_fn(p.mu.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal))
        });
        WeightSample { layer_eps, model_eps }
    }

    /// Realized model-path coefficients for one sample.
    fn model_theta(&self, sample: &WeightSample) -> Option<DVector<f64>> {
        let path = self.model_path.as_ref()?;
        let eps = sample.model_eps.as_ref()?;
        Some(DVector::from_fn(path.mu.nrows(), |i, _| {
            path.mu[i] + softplus(path.rho[i]) * eps[i]
        }))
    }

    /// Batched forward pass. `inputs` is N x D_in (rows are samples); returns
    /// the dense-path and model-path outputs, each D_out x N, plus the
    /// intermediate values the backward pass needs.
    pub fn forward_batch(
        &self,
        inputs: &DMatrix<f64>,
        sample: &WeightSample,
    ) -> Result<ForwardTape> {
        if inputs.ncols() != self.dim_in {
            return Err(Error::DimensionMismatch(format!(
                "network expects {} inputs, got {}",
                self.dim_in,
                inputs.ncols()
            )));
        }
        let n = inputs.nrows();
        let scaled = self.scaler.apply(inputs);
        // columns are samples from here on
        let x = scaled.transpose();

        let mut weights = Vec::with_capacity(self.layers.len());
        for (l, (we, be)) in self.layers.iter().zip(sample.layer_eps.iter()) {
            let w = DMatrix::from_fn(l.w_mu.nrows(), l.w_mu.ncols(), |i, j| {
                l.w_mu[(i, j)] + softplus(l.w_rho[(i, j)]) * we[(i, j)]
            });
            let b = DVector::from_fn(l.b_mu.nrows(), |i, _| {
                l.b_mu[i] + softplus(l.b_rho[i]) * be[i]
            });
            weights.push((w, b));
        }

        let mut activations = vec![x];
        let mut preacts = Vec::with_capacity(self.layers.len());
        for (l, (w, b)) in self.layers.iter().zip(weights.iter()) {
            let mut z = w * activations.last().unwrap();
            for c in 0..n {
                z.column_mut(c).iter_mut().zip(b.iter()).for_each(|(v, bi)| *v += bi);
            }
            let a = match l.activation {
                Activation::Elu => z.map(elu),
                Activation::Linear => z.clone(),
            };
            preacts.push(z);
            activations.push(a);
        }
        let dense_out = activations.last().unwrap().clone();

        let model_out = match (self.model_theta(sample), self.model_path.as_ref()) {
            (Some(theta), Some(path)) => {
                let mut out = DMatrix::zeros(self.dim_out, n);
                for r in 0..n {
                    let row: Vec<f64> = inputs.row(r).iter().copied().collect();
                    let phi = path.model.basis().features(&row);
                    out.set_column(r, &(phi * &theta));
                }
                out
            }
            _ => DMatrix::zeros(self.dim_out, n),
        };

        Ok(ForwardTape {
            weights,
            preacts,
            activations,
            dense_out,
            model_out,
        })
    }

    /// Single-input forward sample; returns the summed output.
    pub fn forward_sample<R: Rng>(&self, x: &[f64], rng: &mut R) -> Result<DVector<f64>> {
        let sample = self.sample_weights(rng);
        let inputs = DMatrix::from_fn(1, x.len(), |_, j| x[j]);
        let tape = self.forward_batch(&inputs, &sample)?;
        Ok((tape.dense_out.column(0) + tape.model_out.column(0)).into_owned())
    }

    pub fn kl(&self) -> f64 {
        self.layers.iter().map(|l| l.kl()).sum::<f64>()
            + self.model_path.as_ref().map_or(0.0, |p| p.kl())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.num_params()).sum::<usize>()
            + self.model_path.as_ref().map_or(0, |p| 2 * p.mu.len())
    }

    /// Flattens all variational parameters (mu then rho per group) into one
    /// vector, in a fixed order shared with `set_packed`.
    pub fn packed(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend(l.w_mu.iter());
            v.extend(l.w_rho.iter());
            v.extend(l.b_mu.iter());
            v.extend(l.b_rho.iter());
        }
        if let Some(p) = &self.model_path {
            v.extend(p.mu.iter());
            v.extend(p.rho.iter());
        }
        DVector::from_vec(v)
    }

    pub fn set_packed(&mut self, packed: &DVector<f64>) -> Result<()> {
        if packed.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} packed parameters, got {}",
                self.num_params(),
                packed.len()
            )));
        }
        let mut k = 0;
        let mut take = |dst: &mut f64| {
            *dst = packed[k];
            k += 1;
        };
        for l in &mut self.layers {
            l.w_mu.iter_mut().for_each(&mut take);
            l.w_rho.iter_mut().for_each(&mut take);
            l.b_mu.iter_mut().for_each(&mut take);
            l.b_rho.iter_mut().for_each(&mut take);
        }
        if let Some(p) = &mut self.model_path {
            p.mu.iter_mut().for_each(&mut take);
            p.rho.iter_mut().for_each(&mut take);
        }
        Ok(())
    }

    /// ELBO loss and analytic gradient for one minibatch under a fixed weight
    /// sample. `scale` is N_total / batch size.
    pub fn elbo_loss_with_sample(
        &self,
        inputs: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        scale: f64,
        sample: &WeightSample,
    ) -> Result<ObjectiveEvaluation> {
        if inputs.nrows() == 0 {
            return Err(Error::EmptyDataset("elbo batch".into()));
        }
        let n = inputs.nrows();
        let tape = self.forward_batch(inputs, sample)?;
        let f = &tape.dense_out + &tape.model_out;

        let s2 = self.sigma_obs2;
        let mut nll = 0.0;
        // dL/dF, D_out x N
        let mut g = DMatrix::zeros(self.dim_out, n);
        for c in 0..n {
            for o in 0..self.dim_out {
                let r = f[(o, c)] - targets[(c, o)];
                nll += 0.5 * ((s2 * 2.0 * std::f64::consts::PI).ln() + r * r / s2);
                g[(o, c)] = scale * r / s2;
            }
        }
        let mut value = scale * nll + self.kl();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "elbo loss (nll={nll}, kl={})",
                self.kl()
            )));
        }

        let mut grad = DVector::zeros(self.num_params());
        let mut k = self.num_params();
        // model path gradient (packed last)
        if let Some(path) = &self.model_path {
            let eps = sample.model_eps.as_ref().unwrap();
            let m = path.mu.len();
            let mut d_theta = DVector::zeros(m);
            for r in 0..n {
                let row: Vec<f64> = inputs.row(r).iter().copied().collect();
                let phi = path.model.basis().features(&row);
                d_theta += phi.transpose() * g.column(r);
            }
            k -= 2 * m;
            for i in 0..m {
                let sigma = softplus(path.rho[i]);
                let pm = path.model.coefficients()[i];
                let sp2 = path.prior_sigma * path.prior_sigma;
                let d_kl_mu = (path.mu[i] - pm) / sp2;
                let d_kl_sigma = -1.0 / sigma + sigma / sp2;
                grad[k + i] = d_theta[i] + d_kl_mu;
                grad[k + m + i] = (d_theta[i] * eps[i] + d_kl_sigma) * sigmoid(path.rho[i]);
            }
        }
        // dense path: backprop from the output layer down
        let mut delta = g; // dL/dZ of the current layer (output layer is linear)
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            if layer.activation == Activation::Elu {
                delta
                    .iter_mut()
                    .zip(tape.preacts[li].iter())
                    .for_each(|(d, z)| *d *= elu_deriv(*z));
            }
            let d_w = &delta * tape.activations[li].transpose();
            let d_b = DVector::from_fn(delta.nrows(), |i, _| delta.row(i).sum());
            let (we, be) = &sample.layer_eps[li];

            let nw = layer.w_mu.len();
            let nb = layer.b_mu.len();
            k -= 2 * (nw + nb);
            let sp2 = layer.prior_sigma * layer.prior_sigma;
            let mut idx = k;
            for (j, (mu, rho)) in layer.w_mu.iter().zip(layer.w_rho.iter()).enumerate() {
                let sigma = softplus(*rho);
                grad[idx + j] = d_w[j] + mu / sp2;
                grad[idx + nw + j] =
                    (d_w[j] * we[j] + (-1.0 / sigma + sigma / sp2)) * sigmoid(*rho);
            }
            idx += 2 * nw;
            for (j, (mu, rho)) in layer.b_mu.iter().zip(layer.b_rho.iter()).enumerate() {
                let sigma = softplus(*rho);
                grad[idx + j] = d_b[j] + mu / sp2;
                grad[idx + nb + j] =
                    (d_b[j] * be[j] + (-1.0 / sigma + sigma / sp2)) * sigmoid(*rho);
            }
            if li > 0 {
                delta = tape.weights[li].0.transpose() * delta;
            }
        }
        debug_assert_eq!(k, 0);

        // guard against divergence in a checked way for the trainer
        if !grad.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("elbo gradient".into()));
        }
        if value == f64::NEG_INFINITY {
            value = f64::MIN;
        }
        Ok(ObjectiveEvaluation { value, gradient: grad })
    }

    /// Draws one weight sample and evaluates the ELBO loss on the batch.
    pub fn elbo_loss<R: Rng>(
        &self,
        inputs: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        scale: f64,
        rng: &mut R,
    ) -> Result<ObjectiveEvaluation> {
        let sample = self.sample_weights(rng);
        self.elbo_loss_with_sample(inputs, targets, scale, &sample)
    }
}

/// Intermediate state of one batched forward pass.
pub struct ForwardTape {
    pub weights: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub preacts: Vec<DMatrix<f64>>,
    pub activations: Vec<DMatrix<f64>>,
    pub dense_out: DMatrix<f64>,
    pub model_out: DMatrix<f64>,
}

