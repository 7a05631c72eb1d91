//! Per-column standard scaling fitted on training data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Stores per-dimension mean and population standard deviation.
/// Constant columns get a standard deviation of 1 so scaling stays defined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardScaler {
    pub fn fit(data: &DMatrix<f64>) -> Self {
        let n = data.nrows() as f64;
        let mut mean = vec![0.0; data.ncols()];
        let mut std = vec![0.0; data.ncols()];
        for c in 0..data.ncols() {
            let mu: f64 = (0..data.nrows()).map(|r| data[(r, c)]).sum::<f64>() / n;
            let var: f64 = (0..data.nrows())
                .map(|r| {
                    let d = data[(r, c)] - mu;
                    d * d
                })
                .sum::<f64>()
                / n;
            mean[c] = mu;
            let s = var.sqrt();
            std[c] = if s > 0.0 { s } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |r, c| {
            (data[(r, c)] - self.mean[c]) / self.std[c]
        })
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(c, v)| (v - self.mean[c]) / self.std[c])
            .collect()
    }

    pub fn invert(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |r, c| {
            data[(r, c)] * self.std[c] + self.mean[c]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn constant_column_degenerate_rule() {
        let data = dmatrix![1.0; 1.0; 1.0];
        let sc = StandardScaler::fit(&data);
        assert_eq!(sc.mean, vec![1.0]);
        assert_eq!(sc.std, vec![1.0]);
        let z = sc.apply(&data);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn population_std_two_points() {
        let data = dmatrix![0.0; 2.0];
        let sc = StandardScaler::fit(&data);
        assert_abs_diff_eq!(sc.mean[0], 1.0);
        assert_abs_diff_eq!(sc.std[0], 1.0);
        let z = sc.apply(&data);
        assert_abs_diff_eq!(z[(0, 0)], -1.0);
        assert_abs_diff_eq!(z[(1, 0)], 1.0);
    }

    #[test]
    fn fit_then_apply_standardizes() {
        let data = dmatrix![0.3, 5.0; -1.2, 5.0; 2.5, 5.0; 0.9, 5.0];
        let sc = StandardScaler::fit(&data);
        let z = sc.apply(&data);
        let n = z.nrows() as f64;
        for c in 0..z.ncols() {
            let mu: f64 = (0..z.nrows()).map(|r| z[(r, c)]).sum::<f64>() / n;
            assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-9);
        }
        // non-constant column has unit std
        let var: f64 = (0..z.nrows()).map(|r| z[(r, 0)] * z[(r, 0)]).sum::<f64>() / n;
        assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn round_trip() {
        let data = dmatrix![0.3, 5.0; -1.2, 4.0; 2.5, 3.0];
        let sc = StandardScaler::fit(&data);
        let back = sc.invert(&sc.apply(&data));
        for (a, b) in back.iter().zip(data.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
