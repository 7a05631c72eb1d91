//! Method registry: every benchmarked learner behind one trait, looked up
//! by its method id.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisModel;
use crate::bnn::{bnn_build, bnn_predict, bnn_train, BambannModel, BnnConfig};
use crate::compose::{
    composite_predict, fit_iterative, ParametricFitter, ResidualSpec, SemiParametricComposite,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gp::{multi_output_fit, GpFitOptions, MeanSpec, MultiOutputGp, SharingMode};
use crate::metrics::Prediction;
use crate::parametric::{lls_fit, parametric_predict, svr_fit, SvrParams};

/// Everything a learner sees: the shared training split, the scenario's
/// analytic model with its optimization-start coefficients, the derived
/// per-cell seed and the kernel/network training-row cap.
pub struct FitContext<'a> {
    pub train: &'a Dataset,
    pub model: &'a BasisModel,
    pub seed: u64,
    pub max_train_rows: Option<usize>,
}

/// A fitted learner ready to predict.
pub trait FittedLearner: Send {
    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Prediction>;
    /// Parametric coefficient snapshot, where the method has one.
    fn coefficients(&self) -> Option<DVector<f64>>;
}

pub trait Learner: Send + Sync {
    fn id(&self) -> &str;
    fn fit(&self, ctx: &FitContext) -> Result<Box<dyn FittedLearner>>;
}

/// Per-method knobs a benchmark config may override.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodOverrides {
    pub svr: Option<SvrParams>,
    pub gp: Option<GpFitOptions>,
    pub bnn: Option<BnnConfig>,
    /// Rounds of the it- composite variants.
    pub iterations: Option<usize>,
}

impl MethodOverrides {
    fn svr_params(&self) -> SvrParams {
        self.svr.clone().unwrap_or_default()
    }

    fn gp_opts(&self) -> GpFitOptions {
        self.gp.clone().unwrap_or_default()
    }

    fn bnn_cfg(&self) -> BnnConfig {
        self.bnn.clone().unwrap_or_default()
    }

    fn iterations(&self) -> usize {
        self.iterations.unwrap_or(3)
    }
}

/// Initialization of the trainable GP mean coefficients.
#[derive(Debug, Clone, Copy)]
enum GpMeanInit {
    /// Plain GP: no parametric mean.
    None,
    /// Semi-parametric GP: start at the scenario's model coefficients.
    Model,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, Copy)]
enum NonParametricKind {
    Gp,
    Bnn,
}

/// Everything in the benchmark is one of these shapes.
enum MethodSpec {
    Parametric { svr: bool },
    Gp { mean: GpMeanInit, mode: SharingMode },
    Bnn { model_path: bool },
    Composite {
        svr: bool,
        residual: NonParametricKind,
        iterative: bool,
    },
}

struct Method {
    id: &'static str,
    spec: MethodSpec,
    overrides: MethodOverrides,
}

fn subsampled(ctx: &FitContext) -> Dataset {
    match ctx.max_train_rows {
        Some(cap) => ctx.train.subsample(cap, ctx.seed ^ 0x7375_6273),
        None => ctx.train.clone(),
    }
}

struct ParametricFitted {
    model: BasisModel,
    report: crate::parametric::ParametricFitReport,
}

impl FittedLearner for ParametricFitted {
    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Prediction> {
        parametric_predict(&self.report, &self.model, inputs)
    }

    fn coefficients(&self) -> Option<DVector<f64>> {
        Some(self.report.coefficients.clone())
    }
}

struct GpFitted(MultiOutputGp);

impl FittedLearner for GpFitted {
    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Prediction> {
        self.0.predict(inputs)
    }

    fn coefficients(&self) -> Option<DVector<f64>> {
        let per_output = self.0.mean_coefficients();
        let mut stacked = Vec::new();
        for c in per_output {
            stacked.extend(c?.iter().copied());
        }
        Some(DVector::from_vec(stacked))
    }
}

struct BnnFitted {
    model: BambannModel,
    predict_samples: usize,
    seed: u64,
}

impl FittedLearner for BnnFitted {
    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Prediction> {
        bnn_predict(&self.model, inputs, self.predict_samples, self.seed)
    }

    fn coefficients(&self) -> Option<DVector<f64>> {
        self.model.model_path.as_ref().map(|p| p.mu.clone())
    }
}

struct CompositeFitted {
    composite: SemiParametricComposite,
    model: BasisModel,
}

impl FittedLearner for CompositeFitted {
    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Prediction> {
        composite_predict(&self.composite, &self.model, inputs)
    }

    fn coefficients(&self) -> Option<DVector<f64>> {
        Some(self.composite.parametric.coefficients.clone())
    }
}

impl Learner for Method {
    fn id(&self) -> &str {
        self.id
    }

    fn fit(&self, ctx: &FitContext) -> Result<Box<dyn FittedLearner>> {
        match &self.spec {
            MethodSpec::Parametric { svr } => {
                let report = if *svr {
                    svr_fit(ctx.model, ctx.train, &self.overrides.svr_params())?
                } else {
                    lls_fit(ctx.model, ctx.train)?
                };
                Ok(Box::new(ParametricFitted {
                    model: ctx.model.clone(),
                    report,
                }))
            }
            MethodSpec::Gp { mean, mode } => {
                let train = subsampled(ctx);
                let mean_spec = match mean {
                    GpMeanInit::None => MeanSpec::Zero,
                    GpMeanInit::Model => MeanSpec::Basis(ctx.model.clone()),
                    GpMeanInit::Zeros => MeanSpec::Basis(ctx.model.with_coefficients(
                        DVector::zeros(ctx.model.coefficients().len()),
                    )?),
                    GpMeanInit::Ones => MeanSpec::Basis(ctx.model.with_coefficients(
                        DVector::from_element(ctx.model.coefficients().len(), 1.0),
                    )?),
                };
                let fitted = multi_output_fit(&train, mean_spec, *mode, &self.overrides.gp_opts())?;
                Ok(Box::new(GpFitted(fitted)))
            }
            MethodSpec::Bnn { model_path } => {
                let train = subsampled(ctx);
                let cfg = self.overrides.bnn_cfg();
                let path_model = model_path.then(|| ctx.model.clone());
                let mut net = bnn_build(
                    train.dim_in(),
                    train.dim_out(),
                    path_model,
                    train.inputs(),
                    train.targets(),
                    &cfg,
                    ctx.seed,
                )?;
                bnn_train(&mut net, &train, &cfg, ctx.seed)?;
                Ok(Box::new(BnnFitted {
                    model: net,
                    predict_samples: cfg.predict_samples,
                    seed: ctx.seed ^ 0x6265_6e63_6870,
                }))
            }
            MethodSpec::Composite {
                svr,
                residual,
                iterative,
            } => {
                let train = subsampled(ctx);
                let fitter = if *svr {
                    ParametricFitter::Svr(self.overrides.svr_params())
                } else {
                    ParametricFitter::Lls
                };
                let residual = match residual {
                    NonParametricKind::Gp => ResidualSpec::Gp {
                        mode: SharingMode::Shared,
                        opts: self.overrides.gp_opts(),
                    },
                    NonParametricKind::Bnn => ResidualSpec::Bnn(self.overrides.bnn_cfg()),
                };
                let iterations = if *iterative {
                    self.overrides.iterations().max(2)
                } else {
                    1
                };
                let composite =
                    fit_iterative(&fitter, &residual, ctx.model, &train, iterations, ctx.seed)?;
                Ok(Box::new(CompositeFitted {
                    composite,
                    model: ctx.model.clone(),
                }))
            }
        }
    }
}

/// All benchmarked method ids, in the canonical table order.
pub const METHOD_IDS: [&str; 18] = [
    "LLS",
    "SVR",
    "GP",
    "BNN",
    "SPGP",
    "SPGP_from_zeros",
    "SPGP_from_ones",
    "SPGP_SepKer",
    "GP_SepKer",
    "BaMbANN",
    "LLS-GP",
    "LLS-BNN",
    "SVR-GP",
    "SVR-BNN",
    "it-LLS-GP",
    "it-LLS-BNN",
    "it-SVR-GP",
    "it-SVR-BNN",
];

fn spec_for(id: &str) -> Option<MethodSpec> {
    Some(match id {
        "LLS" => MethodSpec::Parametric { svr: false },
        "SVR" => MethodSpec::Parametric { svr: true },
        "GP" => MethodSpec::Gp {
            mean: GpMeanInit::None,
            mode: SharingMode::Shared,
        },
        "GP_SepKer" => MethodSpec::Gp {
            mean: GpMeanInit::None,
            mode: SharingMode::Separate,
        },
        "SPGP" => MethodSpec::Gp {
            mean: GpMeanInit::Model,
            mode: SharingMode::Shared,
        },
        "SPGP_from_zeros" => MethodSpec::Gp {
            mean: GpMeanInit::Zeros,
            mode: SharingMode::Shared,
        },
        "SPGP_from_ones" => MethodSpec::Gp {
            mean: GpMeanInit::Ones,
            mode: SharingMode::Shared,
        },
        "SPGP_SepKer" => MethodSpec::Gp {
            mean: GpMeanInit::Model,
            mode: SharingMode::Separate,
        },
        "BNN" => MethodSpec::Bnn { model_path: false },
        "BaMbANN" => MethodSpec::Bnn { model_path: true },
        "LLS-GP" => MethodSpec::Composite {
            svr: false,
            residual: NonParametricKind::Gp,
            iterative: false,
        },
        "LLS-BNN" => MethodSpec::Composite {
            svr: false,
            residual: NonParametricKind::Bnn,
            iterative: false,
        },
        "SVR-GP" => MethodSpec::Composite {
            svr: true,
            residual: NonParametricKind::Gp,
            iterative: false,
        },
        "SVR-BNN" => MethodSpec::Composite {
            svr: true,
            residual: NonParametricKind::Bnn,
            iterative: false,
        },
        "it-LLS-GP" => MethodSpec::Composite {
            svr: false,
            residual: NonParametricKind::Gp,
            iterative: true,
        },
        "it-LLS-BNN" => MethodSpec::Composite {
            svr: false,
            residual: NonParametricKind::Bnn,
            iterative: true,
        },
        "it-SVR-GP" => MethodSpec::Composite {
            svr: true,
            residual: NonParametricKind::Gp,
            iterative: true,
        },
        "it-SVR-BNN" => MethodSpec::Composite {
            svr: true,
            residual: NonParametricKind::Bnn,
            iterative: true,
        },
        _ => return None,
    })
}

/// Name-keyed learner registry.
pub struct Registry {
    learners: BTreeMap<String, Arc<dyn Learner>>,
}

impl Registry {
    /// The standard method table with shared overrides.
    pub fn standard(overrides: &MethodOverrides) -> Self {
        let mut learners: BTreeMap<String, Arc<dyn Learner>> = BTreeMap::new();
        for id in METHOD_IDS {
            let method = Method {
                id,
                spec: spec_for(id).expect("listed id"),
                overrides: overrides.clone(),
            };
            learners.insert(id.to_string(), Arc::new(method));
        }
        Self { learners }
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn Learner>> {
        self.learners
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownMethod(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.learners.contains_key(id)
    }
}
