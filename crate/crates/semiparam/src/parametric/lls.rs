//! Linear least squares over stacked basis features, via SVD.

use nalgebra::linalg::SVD;

use crate::basis::BasisModel;
use crate::dataset::Dataset;
use crate::error::Result;
use crate::parametric::{training_rmse, ParametricFitReport};

const SV_CUTOFF_REL: f64 = 1e-10;

/// Minimum-norm least-squares fit of the shared coefficient vector.
pub fn lls_fit(model: &BasisModel, data: &Dataset) -> Result<ParametricFitReport> {
    let phi = model.stacked_features(data.inputs());
    let y = BasisModel::stack_targets(data.targets());
    let m = phi.ncols();

    let svd = SVD::new(phi, true, true);
    let s_max = svd.singular_values.amax();
    let cutoff = SV_CUTOFF_REL * s_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();

    let coefficients = if rank == 0 {
        nalgebra::DVector::zeros(m)
    } else {
        svd.solve(&y, cutoff)
            .expect("SVD computed with singular vectors")
    };

    let train_rmse = training_rmse(model, &coefficients, data.inputs(), data.targets())?;
    Ok(ParametricFitReport {
        coefficients,
        train_rmse,
        rank,
        rank_deficient: rank < m,
    })
}
