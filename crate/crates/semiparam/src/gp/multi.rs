//! Multi-output handling: one shared hyperparameter/mean set or one set per
//! output column.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFn, BasisModel};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::gp::exact::{FittedGp, GpFitOptions, GpProblem, MeanSpec};
use crate::metrics::Prediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingMode {
    /// One kernel/noise/mean-coefficient set optimized against the summed
    /// per-output marginal likelihoods.
    Shared,
    /// Independent hyperparameters and mean coefficients per output.
    Separate,
}

pub enum MultiOutputGp {
    Shared(FittedGp),
    Separate(Vec<FittedGp>),
}

/// Restricts a multi-output basis to a single output row.
struct RowBasis {
    inner: Arc<dyn BasisFn>,
    row: usize,
    name: String,
}

impl BasisFn for RowBasis {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn num_coefficients(&self) -> usize {
        self.inner.num_coefficients()
    }
    fn features(&self, x: &[f64]) -> DMatrix<f64> {
        let full = self.inner.features(x);
        DMatrix::from_fn(1, full.ncols(), |_, c| full[(self.row, c)])
    }
    fn name(&self) -> &str {
        &self.name
    }
}

fn row_mean(mean: &MeanSpec, row: usize) -> Result<MeanSpec> {
    Ok(match mean {
        MeanSpec::Zero => MeanSpec::Zero,
        MeanSpec::Basis(model) => {
            let basis = Arc::new(RowBasis {
                inner: model.basis().clone(),
                row,
                name: format!("{}_row{row}", model.basis().name()),
            });
            MeanSpec::Basis(BasisModel::new(basis, model.coefficients().clone())?)
        }
    })
}

pub fn multi_output_fit(
    data: &Dataset,
    mean: MeanSpec,
    mode: SharingMode,
    opts: &GpFitOptions,
) -> Result<MultiOutputGp> {
    match mode {
        SharingMode::Shared => Ok(MultiOutputGp::Shared(GpProblem::new(data, mean)?.fit(opts)?)),
        SharingMode::Separate => {
            let mut models = Vec::with_capacity(data.dim_out());
            for o in 0..data.dim_out() {
                let y = data.targets().column(o).into_owned();
                let problem = GpProblem::from_matrices(
                    data.inputs().clone(),
                    DMatrix::from_column_slice(y.len(), 1, y.as_slice()),
                    row_mean(&mean, o)?,
                )?;
                models.push(problem.fit(opts)?);
            }
            Ok(MultiOutputGp::Separate(models))
        }
    }
}

impl MultiOutputGp {
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<Prediction> {
        match self {
            MultiOutputGp::Shared(gp) => gp.predict(inputs),
            MultiOutputGp::Separate(models) => {
                let n = inputs.nrows();
                let d_out = models.len();
                let mut mean = DMatrix::zeros(n, d_out);
                let mut variance = DMatrix::zeros(n, d_out);
                for (o, gp) in models.iter().enumerate() {
                    let p = gp.predict(inputs)?;
                    for r in 0..n {
                        mean[(r, o)] = p.mean[(r, 0)];
                        variance[(r, o)] = p.variance.as_ref().expect("gp variance")[(r, 0)];
                    }
                }
                Prediction::with_variance(mean, variance)
            }
        }
    }

    pub fn total_nlml(&self) -> f64 {
        match self {
            MultiOutputGp::Shared(gp) => gp.nlml,
            MultiOutputGp::Separate(models) => models.iter().map(|m| m.nlml).sum(),
        }
    }

    /// Mean coefficients per model (one entry for shared mode).
    pub fn mean_coefficients(&self) -> Vec<Option<DVector<f64>>> {
        match self {
            MultiOutputGp::Shared(gp) => vec![gp.mean_coefficients().cloned()],
            MultiOutputGp::Separate(models) => models
                .iter()
                .map(|m| m.mean_coefficients().cloned())
                .collect(),
        }
    }
}
