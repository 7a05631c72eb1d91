//! Predictions and the two evaluation metrics: per-dimension RMSE and mean
//! negative log predictive density.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Mean prediction with optional per-point predictive variance.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: DMatrix<f64>,
    pub variance: Option<DMatrix<f64>>,
}

impl Prediction {
    pub fn mean_only(mean: DMatrix<f64>) -> Self {
        Self {
            mean,
            variance: None,
        }
    }

    pub fn with_variance(mean: DMatrix<f64>, variance: DMatrix<f64>) -> Result<Self> {
        if variance.shape() != mean.shape() {
            return Err(Error::DimensionMismatch(format!(
                "variance shape {:?} vs mean shape {:?}",
                variance.shape(),
                mean.shape()
            )));
        }
        if variance.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidConfig(
                "predictive variances must be strictly positive".into(),
            ));
        }
        Ok(Self {
            mean,
            variance: Some(variance),
        })
    }
}

/// Root mean squared error per output dimension.
pub fn rmse(pred: &Prediction, truth: &DMatrix<f64>) -> Result<Vec<f64>> {
    if pred.mean.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!(
            "prediction shape {:?} vs truth shape {:?}",
            pred.mean.shape(),
            truth.shape()
        )));
    }
    if truth.nrows() == 0 {
        return Err(Error::EmptyDataset("rmse".into()));
    }
    let n = truth.nrows() as f64;
    Ok((0..truth.ncols())
        .map(|d| {
            let sse: f64 = (0..truth.nrows())
                .map(|r| {
                    let e = pred.mean[(r, d)] - truth[(r, d)];
                    e * e
                })
                .sum();
            (sse / n).sqrt()
        })
        .collect())
}

/// RMSE pooled over all output dimensions.
pub fn rmse_pooled(pred: &Prediction, truth: &DMatrix<f64>) -> Result<f64> {
    let per_dim = rmse(pred, truth)?;
    let d = per_dim.len() as f64;
    Ok((per_dim.iter().map(|r| r * r).sum::<f64>() / d).sqrt())
}

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Mean Gaussian negative log predictive density per output dimension.
///
/// Returns `None` when the prediction carries no variance; solely parametric
/// methods report RMSE only.
pub fn mean_nllh(pred: &Prediction, truth: &DMatrix<f64>) -> Result<Option<Vec<f64>>> {
    let variance = match &pred.variance {
        Some(v) => v,
        None => return Ok(None),
    };
    if pred.mean.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!(
            "prediction shape {:?} vs truth shape {:?}",
            pred.mean.shape(),
            truth.shape()
        )));
    }
    if truth.nrows() == 0 {
        return Err(Error::EmptyDataset("mean_nllh".into()));
    }
    let n = truth.nrows() as f64;
    let vals = (0..truth.ncols())
        .map(|d| {
            (0..truth.nrows())
                .map(|r| {
                    let s2 = variance[(r, d)];
                    let e = truth[(r, d)] - pred.mean[(r, d)];
                    0.5 * (LN_2PI + s2.ln()) + e * e / (2.0 * s2)
                })
                .sum::<f64>()
                / n
        })
        .collect();
    Ok(Some(vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn rmse_zero_on_exact_match() {
        let truth = dmatrix![1.0; -2.0; 0.5];
        let pred = Prediction::mean_only(truth.clone());
        assert_eq!(rmse(&pred, &truth).unwrap(), vec![0.0]);
    }

    #[test]
    fn rmse_hand_values() {
        let truth = dmatrix![0.0; 0.0];
        let pred = Prediction::mean_only(dmatrix![1.0; -1.0]);
        assert_abs_diff_eq!(rmse(&pred, &truth).unwrap()[0], 1.0, epsilon = 1e-15);

        let truth = dmatrix![0.0; 0.0; 0.0; 0.0];
        let pred = Prediction::mean_only(dmatrix![2.0; 0.0; 0.0; 0.0]);
        assert_abs_diff_eq!(rmse(&pred, &truth).unwrap()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rmse_rejects_empty_and_mismatch() {
        let truth = dmatrix![0.0];
        let pred = Prediction::mean_only(dmatrix![1.0; 2.0]);
        assert!(rmse(&pred, &truth).is_err());
    }

    #[test]
    fn nllh_standard_normal_at_mean() {
        let truth = dmatrix![0.0];
        let pred =
            Prediction::with_variance(dmatrix![0.0], dmatrix![1.0]).unwrap();
        let nllh = mean_nllh(&pred, &truth).unwrap().unwrap();
        assert_abs_diff_eq!(nllh[0], 0.918939, epsilon = 1e-6);
    }

    #[test]
    fn nllh_zero_at_matching_variance() {
        // sigma^2 = 1/(2 pi) makes the log term vanish when mu == y.
        let truth = dmatrix![3.0; -1.0];
        let var = 1.0 / (2.0 * std::f64::consts::PI);
        let pred =
            Prediction::with_variance(truth.clone(), dmatrix![var; var]).unwrap();
        let nllh = mean_nllh(&pred, &truth).unwrap().unwrap();
        assert_abs_diff_eq!(nllh[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn nllh_minimized_at_squared_error() {
        // For fixed error e, d/ds2 [0.5 ln(2 pi s2) + e^2/(2 s2)] = 0 at s2 = e^2.
        let truth = dmatrix![1.0];
        let e: f64 = 0.7;
        let at = |s2: f64| {
            let pred =
                Prediction::with_variance(dmatrix![1.0 + e], dmatrix![s2]).unwrap();
            mean_nllh(&pred, &truth).unwrap().unwrap()[0]
        };
        let opt = at(e * e);
        assert!(at(e * e * 0.5) > opt);
        assert!(at(e * e * 2.0) > opt);
    }

    #[test]
    fn nllh_missing_variance_is_not_an_error() {
        let truth = dmatrix![0.0];
        let pred = Prediction::mean_only(dmatrix![0.0]);
        assert!(mean_nllh(&pred, &truth).unwrap().is_none());
    }

    #[test]
    fn nllh_permutation_invariant() {
        let truth = dmatrix![1.0; 2.0; 3.0];
        let pred = Prediction::with_variance(
            dmatrix![1.1; 1.8; 3.3],
            dmatrix![0.5; 0.25; 2.0],
        )
        .unwrap();
        let truth_p = dmatrix![3.0; 1.0; 2.0];
        let pred_p = Prediction::with_variance(
            dmatrix![3.3; 1.1; 1.8],
            dmatrix![2.0; 0.5; 0.25],
        )
        .unwrap();
        let a = mean_nllh(&pred, &truth).unwrap().unwrap()[0];
        let b = mean_nllh(&pred_p, &truth_p).unwrap().unwrap()[0];
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }
}
