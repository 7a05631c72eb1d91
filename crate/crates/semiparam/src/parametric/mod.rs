//! Solely parametric identification of basis-model coefficients: linear least
//! squares and epsilon-insensitive support vector regression on the model's
//! feature map.

mod lls;
mod svr;

pub use lls::lls_fit;
pub use svr::{check_kkt, svr_fit, svr_fit_with_dual, SvrParams};

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisModel;
use crate::error::Result;
use crate::metrics::Prediction;

/// Outcome of a parametric fit.
#[derive(Debug, Clone)]
pub struct ParametricFitReport {
    pub coefficients: DVector<f64>,
    pub train_rmse: Vec<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Mean-only prediction with the fitted coefficients substituted into the model.
pub fn parametric_predict(
    report: &ParametricFitReport,
    model: &BasisModel,
    inputs: &DMatrix<f64>,
) -> Result<Prediction> {
    let fitted = model.with_coefficients(report.coefficients.clone())?;
    Ok(Prediction::mean_only(fitted.predict(inputs)?))
}

pub(crate) fn training_rmse(
    model: &BasisModel,
    coefficients: &DVector<f64>,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let fitted = model.with_coefficients(coefficients.clone())?;
    let pred = Prediction::mean_only(fitted.predict(inputs)?);
    crate::metrics::rmse(&pred, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, SplitTag};
    use crate::scenario::toy::{toy_basis, toy_model};
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn noise_free_toy(n: usize) -> (BasisModel, Dataset) {
        let model = toy_model(dvector![2.0, -1.5, 3.0, 2.4]);
        let xs = DMatrix::from_fn(n, 1, |r, _| 12.0 * r as f64 / (n - 1) as f64);
        let ys = model.predict(&xs).unwrap();
        (model, Dataset::new(xs, ys, SplitTag::Train, "toy_exact").unwrap())
    }

    #[test]
    fn lls_recovers_toy_coefficients() {
        let (model, data) = noise_free_toy(40);
        let report = lls_fit(&model, &data).unwrap();
        let truth = [2.0, -1.5, 3.0, 2.4];
        for (i, t) in truth.iter().enumerate() {
            assert_abs_diff_eq!(report.coefficients[i], *t, epsilon = 1e-8);
        }
        assert_eq!(report.rank, 4);
        assert!(!report.rank_deficient);
    }

    #[test]
    fn lls_one_dim_exact() {
        let basis = crate::basis::ClosureBasis::new("id", 1, 1, 1, |x: &[f64]| {
            DMatrix::from_row_slice(1, 1, &[x[0]])
        });
        let model = BasisModel::new(std::sync::Arc::new(basis), dvector![0.0]).unwrap();
        let xs = DMatrix::from_fn(5, 1, |r, _| 1.0 + r as f64);
        let ys = 2.0 * xs.clone();
        let data = Dataset::new(xs, ys, SplitTag::Train, "lin").unwrap();
        let report = lls_fit(&model, &data).unwrap();
        assert_abs_diff_eq!(report.coefficients[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn lls_duplicate_column_min_norm() {
        // basis (x, x): minimum-norm solution splits the weight equally.
        let basis = crate::basis::ClosureBasis::new("dup", 1, 1, 2, |x: &[f64]| {
            DMatrix::from_row_slice(1, 2, &[x[0], x[0]])
        });
        let model = BasisModel::new(std::sync::Arc::new(basis), dvector![0.0, 0.0]).unwrap();
        let xs = DMatrix::from_fn(6, 1, |r, _| 1.0 + r as f64);
        let ys = 4.0 * xs.clone();
        let data = Dataset::new(xs, ys, SplitTag::Train, "dup").unwrap();
        let report = lls_fit(&model, &data).unwrap();
        assert_eq!(report.rank, 1);
        assert!(report.rank_deficient);
        assert_abs_diff_eq!(report.coefficients[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(report.coefficients[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn lls_all_zero_features() {
        let basis = crate::basis::ClosureBasis::new("zero", 1, 1, 2, |_x: &[f64]| {
            DMatrix::zeros(1, 2)
        });
        let model = BasisModel::new(std::sync::Arc::new(basis), dvector![0.0, 0.0]).unwrap();
        let xs = DMatrix::from_fn(3, 1, |r, _| r as f64);
        let ys = DMatrix::from_element(3, 1, 1.0);
        let data = Dataset::new(xs, ys, SplitTag::Train, "z").unwrap();
        let report = lls_fit(&model, &data).unwrap();
        assert_eq!(report.rank, 0);
        assert!(report.rank_deficient);
        assert_eq!(report.coefficients, dvector![0.0, 0.0]);
    }

    #[test]
    fn lls_first_order_optimality() {
        use rand::Rng;
        use rand::SeedableRng;
        let (model, data) = noise_free_toy(40);
        // perturb targets so the residual is nonzero
        let mut targets = data.targets().clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for v in targets.iter_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
        let data = data.with_targets(targets).unwrap();
        let report = lls_fit(&model, &data).unwrap();
        let phi = model.stacked_features(data.inputs());
        let y = BasisModel::stack_targets(data.targets());
        let base = (&phi * &report.coefficients - &y).norm();
        for _ in 0..20 {
            let mut delta = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            delta *= 1e-3 / delta.norm();
            let perturbed = (&phi * (&report.coefficients + delta) - &y).norm();
            assert!(perturbed >= base - 1e-12);
        }
    }

    #[test]
    fn svr_stays_at_truth_inside_tube() {
        let (model, data) = noise_free_toy(60);
        let report = svr_fit(
            &model,
            &data,
            &SvrParams {
                c: 1e4,
                epsilon: 0.1,
                tol: 1e-6,
                ..SvrParams::default()
            },
        )
        .unwrap();
        let pred = parametric_predict(&report, &model, data.inputs()).unwrap();
        for (p, t) in pred.mean.iter().zip(data.targets().iter()) {
            assert!((p - t).abs() <= 0.1 + 1e-6);
        }
    }

    #[test]
    fn svr_wide_tube_gives_zero_coefficients() {
        let (model, data) = noise_free_toy(30);
        let spread = data.targets().amax();
        let report = svr_fit(
            &model,
            &data,
            &SvrParams {
                c: 1.0,
                epsilon: 2.0 * spread + 1.0,
                ..SvrParams::default()
            },
        )
        .unwrap();
        assert!(report.coefficients.amax() < 1e-12);
    }

    #[test]
    fn svr_more_robust_to_outliers_than_lls() {
        use rand::Rng;
        use rand::SeedableRng;
        let (model, clean) = noise_free_toy(200);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut targets = clean.targets().clone();
        for r in 0..targets.nrows() {
            if rng.gen::<f64>() < 0.05 {
                targets[(r, 0)] += 50.0;
            }
        }
        let data = clean.with_targets(targets).unwrap();
        let truth = dvector![2.0, -1.5, 3.0, 2.4];
        let lls = lls_fit(&model, &data).unwrap();
        let svr = svr_fit(&model, &data, &SvrParams::default()).unwrap();
        let err_lls = (&lls.coefficients - &truth).norm();
        let err_svr = (&svr.coefficients - &truth).norm();
        assert!(
            err_svr < err_lls,
            "svr {err_svr} should beat lls {err_lls}"
        );
    }

    #[test]
    fn svr_matches_lls_on_noise_free_data() {
        let (model, data) = noise_free_toy(60);
        let lls = lls_fit(&model, &data).unwrap();
        let svr = svr_fit(
            &model,
            &data,
            &SvrParams {
                c: 1e8,
                epsilon: 0.0,
                tol: 1e-6,
                ..SvrParams::default()
            },
        )
        .unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(svr.coefficients[i], lls.coefficients[i], epsilon = 1e-4);
        }
    }

    #[test]
    fn svr_kkt_residuals() {
        use rand::Rng;
        use rand::SeedableRng;
        let (model, clean) = noise_free_toy(80);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut targets = clean.targets().clone();
        for v in targets.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        let data = clean.with_targets(targets).unwrap();
        let params = SvrParams {
            tol: 1e-6,
            ..SvrParams::default()
        };
        let (_report, beta) = svr_fit_with_dual(&model, &data, &params).unwrap();
        let phi = model.stacked_features(data.inputs());
        let y = BasisModel::stack_targets(data.targets());
        check_kkt(&phi, &y, &beta, &params, 1e-5).unwrap();
    }

    #[test]
    fn basis_ref_unused_output_matches_toy_basis() {
        let _ = toy_basis();
    }
}
