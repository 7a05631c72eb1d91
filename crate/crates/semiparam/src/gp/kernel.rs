//! Squared-exponential kernel with automatic relevance determination.

use nalgebra::{DMatrix, DVector};

/// RBF kernel with one lengthscale per input dimension.
#[derive(Debug, Clone)]
pub struct RbfArdKernel {
    pub variance: f64,
    pub lengthscales: DVector<f64>,
}

impl RbfArdKernel {
    pub fn isotropic(variance: f64, lengthscale: f64, dim: usize) -> Self {
        Self {
            variance,
            lengthscales: DVector::from_element(dim, lengthscale),
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for d in 0..self.lengthscales.len() {
            let z = (a[d] - b[d]) / self.lengthscales[d];
            d2 += z * z;
        }
        self.variance * (-0.5 * d2).exp()
    }

    /// Gram matrix over row-major sample matrices.
    pub fn gram(&self, xa: &DMatrix<f64>, xb: &DMatrix<f64>) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(xa.nrows(), xb.nrows());
        for i in 0..xa.nrows() {
            for j in 0..xb.nrows() {
                let mut d2 = 0.0;
                for d in 0..self.lengthscales.len() {
                    let z = (xa[(i, d)] - xb[(j, d)]) / self.lengthscales[d];
                    d2 += z * z;
                }
                k[(i, j)] = self.variance * (-0.5 * d2).exp();
            }
        }
        k
    }

    /// Symmetric train Gram matrix plus the per-dimension scaled squared
    /// distance matrices needed for lengthscale gradients.
    pub fn gram_with_sqdists(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let n = x.nrows();
        let dims = self.lengthscales.len();
        let mut sq = vec![DMatrix::zeros(n, n); dims];
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut d2 = 0.0;
                for d in 0..dims {
                    let z = (x[(i, d)] - x[(j, d)]) / self.lengthscales[d];
                    let z2 = z * z;
                    sq[d][(i, j)] = z2;
                    sq[d][(j, i)] = z2;
                    d2 += z2;
                }
                let v = self.variance * (-0.5 * d2).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        (k, sq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diagonal_is_signal_variance() {
        let k = RbfArdKernel::isotropic(2.5, 0.7, 3);
        let x = [0.1, -0.4, 2.0];
        assert_abs_diff_eq!(k.eval(&x, &x), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn unit_kernel_at_sqrt2() {
        let k = RbfArdKernel::isotropic(1.0, 1.0, 1);
        let v = k.eval(&[0.0], &[std::f64::consts::SQRT_2]);
        assert_abs_diff_eq!(v, (-1.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn huge_lengthscale_switches_dimension_off() {
        let k = RbfArdKernel {
            variance: 1.0,
            lengthscales: DVector::from_row_slice(&[1.0, 1e8]),
        };
        let a = k.eval(&[0.3, -5.0], &[0.8, 5.0]);
        let b = k.eval(&[0.3, 4.0], &[0.8, -6.0]);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn gram_symmetry() {
        let k = RbfArdKernel::isotropic(1.3, 0.9, 2);
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, -0.5, 2.0, 3.0, 0.1, 1.5, -2.0]);
        let g = k.gram(&x, &x);
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(g[(i, j)], g[(j, i)], epsilon = 1e-15);
            }
        }
    }
}
