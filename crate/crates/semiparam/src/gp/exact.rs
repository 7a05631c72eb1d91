//! Exact GP regression with Gaussian likelihood, pluggable parametric mean
//! function, and joint hyperparameter/mean-coefficient optimization on the
//! negative log marginal likelihood.
//!
//! Positivity of kernel variance, lengthscales and noise variance is enforced
//! by optimizing their logarithms; the packed parameter vector is
//! `[ln sf2, ln l_1 .. ln l_D, ln sn2, theta_m...]` with the mean coefficients
//! present only for a basis mean.

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::basis::BasisModel;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gp::kernel::RbfArdKernel;
use crate::metrics::Prediction;
use crate::optim::{lbfgs_minimize, LbfgsOptions, ObjectiveEvaluation};

const LN_2PI: f64 = 1.837877066409345483560659472811;
const MAX_JITTER: f64 = 1e-4;
const VARIANCE_FLOOR: f64 = 1e-12;

/// Mean function of the GP: zero for the plain baseline, a basis model with
/// trainable coefficients for the semi-parametric variant.
#[derive(Clone)]
pub enum MeanSpec {
    Zero,
    /// Coefficients of the carried model are the optimization start.
    Basis(BasisModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpFitOptions {
    pub init_kernel_variance: f64,
    pub init_lengthscale: f64,
    pub init_noise_variance: f64,
    pub lbfgs: LbfgsOptions,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            init_kernel_variance: 1.0,
            init_lengthscale: 1.0,
            init_noise_variance: 1.0,
            lbfgs: LbfgsOptions::default(),
        }
    }
}

/// Training-time view of the problem: inputs, targets and the mean spec.
/// Output columns share kernel, noise and mean coefficients; the total
/// objective is the sum of per-column marginal likelihoods.
pub struct GpProblem {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    mean: MeanSpec,
    /// Per-output feature matrices (N x M), empty for zero mean.
    phis: Vec<DMatrix<f64>>,
}

impl GpProblem {
    pub fn new(data: &Dataset, mean: MeanSpec) -> Result<Self> {
        Self::from_matrices(data.inputs().clone(), data.targets().clone(), mean)
    }

    pub fn from_matrices(x: DMatrix<f64>, y: DMatrix<f64>, mean: MeanSpec) -> Result<Self> {
        let phis = match &mean {
            MeanSpec::Zero => Vec::new(),
            MeanSpec::Basis(model) => {
                if model.basis().dim_out() != y.ncols() {
                    return Err(Error::DimensionMismatch(format!(
                        "mean model has {} outputs, targets have {}",
                        model.basis().dim_out(),
                        y.ncols()
                    )));
                }
                let n = x.nrows();
                let m = model.basis().num_coefficients();
                let d_out = y.ncols();
                let mut phis = vec![DMatrix::zeros(n, m); d_out];
                let mut row = vec![0.0; x.ncols()];
                for r in 0..n {
                    for c in 0..x.ncols() {
                        row[c] = x[(r, c)];
                    }
                    let block = model.basis().features(&row);
                    for o in 0..d_out {
                        for j in 0..m {
                            phis[o][(r, j)] = block[(o, j)];
                        }
                    }
                }
                phis
            }
        };
        Ok(Self { x, y, mean, phis })
    }

    pub fn num_mean_coefficients(&self) -> usize {
        match &self.mean {
            MeanSpec::Zero => 0,
            MeanSpec::Basis(m) => m.basis().num_coefficients(),
        }
    }

    pub fn packed_dim(&self) -> usize {
        // ln sf2 + ln lengthscales + ln sn2 + mean coefficients
        2 + self.x.ncols() + self.num_mean_coefficients()
    }

    pub fn initial_packed(&self, opts: &GpFitOptions) -> DVector<f64> {
        let d = self.x.ncols();
        let mut p = DVector::zeros(self.packed_dim());
        p[0] = opts.init_kernel_variance.ln();
        for i in 0..d {
            p[1 + i] = opts.init_lengthscale.ln();
        }
        p[1 + d] = opts.init_noise_variance.ln();
        if let MeanSpec::Basis(model) = &self.mean {
            for (i, v) in model.coefficients().iter().enumerate() {
                p[2 + d + i] = *v;
            }
        }
        p
    }

    fn unpack(&self, packed: &DVector<f64>) -> (RbfArdKernel, f64, Option<DVector<f64>>) {
        let d = self.x.ncols();
        let kernel = RbfArdKernel {
            variance: packed[0].exp(),
            lengthscales: DVector::from_fn(d, |i, _| packed[1 + i].exp()),
        };
        let noise = packed[1 + d].exp();
        let theta = if self.num_mean_coefficients() > 0 {
            Some(DVector::from_fn(self.num_mean_coefficients(), |i, _| {
                packed[2 + d + i]
            }))
        } else {
            None
        };
        (kernel, noise, theta)
    }

    fn residuals(&self, theta: Option<&DVector<f64>>) -> DMatrix<f64> {
        let mut r = self.y.clone();
        if let (Some(theta), false) = (theta, self.phis.is_empty()) {
            for (o, phi) in self.phis.iter().enumerate() {
                let mean = phi * theta;
                for n in 0..r.nrows() {
                    r[(n, o)] -= mean[n];
                }
            }
        }
        r
    }

    /// Negative log marginal likelihood (summed over output columns) with
    /// analytic gradients for every packed entry.
    pub fn neg_log_marginal_likelihood(&self, packed: &DVector<f64>) -> Result<ObjectiveEvaluation> {
        let (kernel, noise, theta) = self.unpack(packed);
        let n = self.x.nrows();
        let d = self.x.ncols();
        let d_out = self.y.ncols();

        let (kf, sqdists) = kernel.gram_with_sqdists(&self.x);
        let mut ky = kf.clone();
        for i in 0..n {
            ky[(i, i)] += noise;
        }
        let (chol, _jitter) = cholesky_with_jitter(&ky)?;

        let log_det: f64 = 2.0 * (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
        let residuals = self.residuals(theta.as_ref());

        let mut value = 0.0;
        let mut alphas = DMatrix::zeros(n, d_out);
        for o in 0..d_out {
            let r = residuals.column(o).into_owned();
            let alpha = chol.solve(&r);
            value += 0.5 * r.dot(&alpha) + 0.5 * log_det + 0.5 * n as f64 * LN_2PI;
            alphas.set_column(o, &alpha);
        }

        // G = sum_o alpha_o alpha_o^T - D_out K_y^-1; each gradient is
        // -1/2 sum(G .* dK/dtheta).
        let kinv = chol.inverse();
        let g = &alphas * alphas.transpose() - (d_out as f64) * &kinv;

        let mut grad = DVector::zeros(packed.len());
        // d ln sf2: dK = Kf
        grad[0] = -0.5 * g.component_mul(&kf).sum();
        // d ln l_d: dK = Kf .* scaled sqdist_d
        for dim in 0..d {
            grad[1 + dim] = -0.5 * g.component_mul(&kf).component_mul(&sqdists[dim]).sum();
        }
        // d ln sn2: dK = sn2 I
        grad[1 + d] = -0.5 * noise * g.trace();
        // mean coefficients: dNLML/dtheta = -sum_o Phi_o^T alpha_o
        if theta.is_some() {
            for (o, phi) in self.phis.iter().enumerate() {
                let contrib = phi.transpose() * alphas.column(o);
                for j in 0..contrib.len() {
                    grad[2 + d + j] -= contrib[j];
                }
            }
        }

        Ok(ObjectiveEvaluation { value, gradient: grad })
    }

    /// NLML value without the gradient machinery (no K^-1, no per-dimension
    /// distance matrices); used for line-search trial points.
    pub fn nlml_value(&self, packed: &DVector<f64>) -> Result<f64> {
        let (kernel, noise, theta) = self.unpack(packed);
        let n = self.x.nrows();
        let d_out = self.y.ncols();

        let mut ky = kernel.gram(&self.x, &self.x);
        for i in 0..n {
            ky[(i, i)] += noise;
        }
        let (chol, _jitter) = cholesky_with_jitter(&ky)?;
        let log_det: f64 = 2.0 * (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
        let residuals = self.residuals(theta.as_ref());

        let mut value = 0.0;
        for o in 0..d_out {
            let r = residuals.column(o).into_owned();
            let alpha = chol.solve(&r);
            value += 0.5 * r.dot(&alpha) + 0.5 * log_det + 0.5 * n as f64 * LN_2PI;
        }
        Ok(value)
    }

    /// Optimizes the packed parameters and caches the posterior state.
    pub fn fit(self, opts: &GpFitOptions) -> Result<FittedGp> {
        let init = self.initial_packed(opts);
        self.fit_from(init, opts)
    }

    pub fn fit_from(self, init: DVector<f64>, opts: &GpFitOptions) -> Result<FittedGp> {
        struct Nlml<'a>(&'a GpProblem);
        impl crate::optim::Objective for Nlml<'_> {
            fn value(&mut self, p: &DVector<f64>) -> Result<f64> {
                self.0.nlml_value(p)
            }
            fn value_grad(&mut self, p: &DVector<f64>) -> Result<ObjectiveEvaluation> {
                self.0.neg_log_marginal_likelihood(p)
            }
        }
        let outcome = lbfgs_minimize(Nlml(&self), &init, &opts.lbfgs)?;
        self.freeze(&outcome.x, outcome.value)
    }

    /// Builds the fitted model at the given packed parameters without optimizing.
    pub fn freeze(self, packed: &DVector<f64>, nlml: f64) -> Result<FittedGp> {
        let (kernel, noise, theta) = self.unpack(packed);
        let n = self.x.nrows();
        let (kf, _) = kernel.gram_with_sqdists(&self.x);
        let mut ky = kf;
        for i in 0..n {
            ky[(i, i)] += noise;
        }
        let (chol, _) = cholesky_with_jitter(&ky)?;
        let residuals = self.residuals(theta.as_ref());
        let mut alphas = DMatrix::zeros(n, self.y.ncols());
        for o in 0..self.y.ncols() {
            alphas.set_column(o, &chol.solve(&residuals.column(o).into_owned()));
        }
        let mean = match (&self.mean, theta) {
            (MeanSpec::Zero, _) => MeanSpec::Zero,
            (MeanSpec::Basis(model), Some(theta)) => MeanSpec::Basis(model.with_coefficients(theta)?),
            (MeanSpec::Basis(_), None) => unreachable!("basis mean always packs coefficients"),
        };
        Ok(FittedGp {
            kernel,
            noise_variance: noise,
            mean,
            x_train: self.x,
            alphas,
            chol,
            nlml,
        })
    }
}

/// A fitted GP, immutable and shareable.
pub struct FittedGp {
    pub kernel: RbfArdKernel,
    pub noise_variance: f64,
    pub mean: MeanSpec,
    x_train: DMatrix<f64>,
    alphas: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    pub nlml: f64,
}

impl FittedGp {
    pub fn dim_out(&self) -> usize {
        self.alphas.ncols()
    }

    /// Fitted mean coefficients, if the mean is a basis model.
    pub fn mean_coefficients(&self) -> Option<&DVector<f64>> {
        match &self.mean {
            MeanSpec::Zero => None,
            MeanSpec::Basis(m) => Some(m.coefficients()),
        }
    }

    /// Predictive mean and variance; the variance includes observation noise.
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<Prediction> {
        let n_star = inputs.nrows();
        let d_out = self.dim_out();
        let k_star = self.kernel.gram(&self.x_train, inputs);

        let mut mean = DMatrix::zeros(n_star, d_out);
        if let MeanSpec::Basis(model) = &self.mean {
            mean = model.predict(inputs)?;
        }
        for o in 0..d_out {
            let posterior = k_star.transpose() * self.alphas.column(o);
            for r in 0..n_star {
                mean[(r, o)] += posterior[r];
            }
        }

        // variance is identical across outputs (shared kernel); computed once
        let mut var_col = DVector::zeros(n_star);
        for s in 0..n_star {
            let k_s = k_star.column(s).into_owned();
            let v = self.chol.solve(&k_s);
            let var = self.kernel.variance - k_s.dot(&v) + self.noise_variance;
            var_col[s] = var.max(VARIANCE_FLOOR);
        }
        let variance = DMatrix::from_fn(n_star, d_out, |r, _| var_col[r]);
        Prediction::with_variance(mean, variance)
    }

    pub fn summary(&self) -> GpSummary {
        GpSummary {
            kernel: KernelSummary {
                variance: self.kernel.variance,
                lengthscales: self.kernel.lengthscales.iter().copied().collect(),
            },
            noise_variance: self.noise_variance,
            mean: match &self.mean {
                MeanSpec::Zero => MeanSummary {
                    kind: "zero".into(),
                    coefficients: Vec::new(),
                },
                MeanSpec::Basis(m) => MeanSummary {
                    kind: "basis".into(),
                    coefficients: m.coefficients().iter().copied().collect(),
                },
            },
        }
    }
}

/// Serializable snapshot of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpSummary {
    pub kernel: KernelSummary,
    pub noise_variance: f64,
    pub mean: MeanSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSummary {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanSummary {
    #[serde(rename = "type")]
    pub kind: String,
    pub coefficients: Vec<f64>,
}

/// Cholesky with escalating diagonal jitter, starting at
/// 1e-10 * trace(K)/N and growing tenfold up to 1e-4.
pub fn cholesky_with_jitter(ky: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(chol) = Cholesky::new(ky.clone()) {
        return Ok((chol, 0.0));
    }
    let n = ky.nrows();
    // Floor the scale-relative start so a fully underflowed kernel (trace 0)
    // still escalates instead of looping at jitter = 0.
    let mut jitter = (1e-10 * ky.trace() / n as f64).max(1e-20);
    while jitter <= MAX_JITTER {
        let mut m = ky.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite { jitter })
}
