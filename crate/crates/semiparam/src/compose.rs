//! Sequential and iterative composition of a parametric fitter with a
//! non-parametric residual learner, plus the summed predictor.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisModel;
use crate::bnn::{bnn_build, bnn_predict, bnn_train, BambannModel, BnnConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gp::{multi_output_fit, GpFitOptions, MeanSpec, MultiOutputGp, SharingMode};
use crate::metrics::Prediction;
use crate::parametric::{
    lls_fit, parametric_predict, svr_fit, ParametricFitReport, SvrParams,
};

/// First-stage coefficient estimator.
#[derive(Debug, Clone)]
pub enum ParametricFitter {
    Lls,
    Svr(SvrParams),
}

impl ParametricFitter {
    pub fn id(&self) -> &'static str {
        match self {
            ParametricFitter::Lls => "LLS",
            ParametricFitter::Svr(_) => "SVR",
        }
    }

    pub fn fit(&self, model: &BasisModel, data: &Dataset) -> Result<ParametricFitReport> {
        match self {
            ParametricFitter::Lls => lls_fit(model, data),
            ParametricFitter::Svr(params) => svr_fit(model, data, params),
        }
    }
}

/// Second-stage learner trained on the parametric residuals with zero mean.
#[derive(Clone)]
pub enum ResidualSpec {
    /// Degenerate learner that always predicts zero; the composite collapses
    /// to the parametric-only predictor.
    Zero,
    Gp {
        mode: SharingMode,
        opts: GpFitOptions,
    },
    Bnn(BnnConfig),
}

impl ResidualSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ResidualSpec::Zero => "Zero",
            ResidualSpec::Gp { .. } => "GP",
            ResidualSpec::Bnn(_) => "BNN",
        }
    }
}

/// Fitted residual learner.
pub enum FittedResidual {
    Zero { dim_out: usize },
    Gp(MultiOutputGp),
    Bnn {
        model: BambannModel,
        predict_samples: usize,
        seed: u64,
    },
}

impl FittedResidual {
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<Prediction> {
        match self {
            FittedResidual::Zero { dim_out } => Ok(Prediction::mean_only(DMatrix::zeros(
                inputs.nrows(),
                *dim_out,
            ))),
            FittedResidual::Gp(gp) => gp.predict(inputs),
            FittedResidual::Bnn {
                model,
                predict_samples,
                seed,
            } => bnn_predict(model, inputs, *predict_samples, *seed),
        }
    }
}

/// A fitted semi-parametric composite: parametric coefficients plus a
/// residual learner, predicting their sum.
pub struct SemiParametricComposite {
    pub fitter_id: String,
    pub learner_id: String,
    pub iterations: usize,
    pub parametric: ParametricFitReport,
    pub residual: FittedResidual,
    /// Parametric coefficients after each round, for convergence inspection.
    pub coefficient_history: Vec<DVector<f64>>,
}

impl SemiParametricComposite {
    /// Method id as used in result tables, e.g. `LLS-GP` or `it-SVR-BNN`.
    pub fn method_name(&self) -> String {
        let prefix = if self.iterations > 1 { "it-" } else { "" };
        format!("{prefix}{}-{}", self.fitter_id, self.learner_id)
    }
}

/// Residual targets of the parametric stage: `Y - h_theta(X)`.
pub fn residual_targets(
    model: &BasisModel,
    report: &ParametricFitReport,
    data: &Dataset,
) -> Result<DMatrix<f64>> {
    let mean = parametric_predict(report, model, data.inputs())?.mean;
    Ok(data.targets() - mean)
}

fn fit_residual(spec: &ResidualSpec, residual_data: &Dataset, seed: u64) -> Result<FittedResidual> {
    match spec {
        ResidualSpec::Zero => Ok(FittedResidual::Zero {
            dim_out: residual_data.dim_out(),
        }),
        ResidualSpec::Gp { mode, opts } => Ok(FittedResidual::Gp(multi_output_fit(
            residual_data,
            MeanSpec::Zero,
            *mode,
            opts,
        )?)),
        ResidualSpec::Bnn(cfg) => {
            let mut model = bnn_build(
                residual_data.dim_in(),
                residual_data.dim_out(),
                None,
                residual_data.inputs(),
                residual_data.targets(),
                cfg,
                seed,
            )?;
            bnn_train(&mut model, residual_data, cfg, seed)?;
            Ok(FittedResidual::Bnn {
                model,
                predict_samples: cfg.predict_samples,
                seed: seed ^ 0x636f_6d70_7072_6564,
            })
        }
    }
}

/// Two-step fit: parametric coefficients first, then a zero-mean residual
/// learner on `Y - h_theta(X)`.
pub fn fit_sequential(
    fitter: &ParametricFitter,
    residual: &ResidualSpec,
    model: &BasisModel,
    data: &Dataset,
    seed: u64,
) -> Result<SemiParametricComposite> {
    fit_iterative(fitter, residual, model, data, 1, seed)
}

/// Alternating fit: each round refits the parametric stage on
/// `Y - g(X)` (residual-learner prediction of the previous round) and the
/// residual learner, freshly initialized, on the new parametric residuals.
/// `iterations = 1` is exactly the sequential fit.
pub fn fit_iterative(
    fitter: &ParametricFitter,
    residual: &ResidualSpec,
    model: &BasisModel,
    data: &Dataset,
    iterations: usize,
    seed: u64,
) -> Result<SemiParametricComposite> {
    if iterations == 0 {
        return Err(Error::InvalidConfig(
            "composite iterations must be at least 1".into(),
        ));
    }
    let mut nonparametric_mean = DMatrix::zeros(data.len(), data.dim_out());
    let mut history = Vec::with_capacity(iterations);
    let mut last: Option<(ParametricFitReport, FittedResidual)> = None;
    for _ in 0..iterations {
        let parametric_data = data.with_targets(data.targets() - &nonparametric_mean)?;
        let report = fitter.fit(model, &parametric_data)?;
        history.push(report.coefficients.clone());
        let residual_data = data.with_targets(residual_targets(model, &report, data)?)?;
        let fitted = fit_residual(residual, &residual_data, seed)?;
        nonparametric_mean = fitted.predict(data.inputs())?.mean;
        last = Some((report, fitted));
    }
    let (parametric, fitted_residual) = last.expect("at least one round");
    Ok(SemiParametricComposite {
        fitter_id: fitter.id().to_string(),
        learner_id: residual.id().to_string(),
        iterations,
        parametric,
        residual: fitted_residual,
        coefficient_history: history,
    })
}

/// Summed predictor: parametric mean plus residual mean; the variance is the
/// residual learner's alone (parametric coefficients treated as
/// deterministic).
pub fn composite_predict(
    composite: &SemiParametricComposite,
    model: &BasisModel,
    inputs: &DMatrix<f64>,
) -> Result<Prediction> {
    let parametric = parametric_predict(&composite.parametric, model, inputs)?;
    let residual = composite.residual.predict(inputs)?;
    let mean = parametric.mean + &residual.mean;
    match residual.variance {
        Some(variance) => Prediction::with_variance(mean, variance),
        None => Ok(Prediction::mean_only(mean)),
    }
}
