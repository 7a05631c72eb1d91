//! Linear-in-parameters analytic models: per-output basis maps sharing one
//! coefficient vector.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A family of basis maps, one per output dimension, all of length `num_coefficients`.
pub trait BasisFn: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn num_coefficients(&self) -> usize;

    /// Feature matrix for one input: `dim_out x num_coefficients` rows of basis values.
    fn features(&self, x: &[f64]) -> DMatrix<f64>;

    fn name(&self) -> &str;
}

/// An analytic model `y_i = phi_i(x)^T theta` with shared coefficients.
#[derive(Clone)]
pub struct BasisModel {
    basis: Arc<dyn BasisFn>,
    coefficients: DVector<f64>,
}

impl BasisModel {
    pub fn new(basis: Arc<dyn BasisFn>, coefficients: DVector<f64>) -> Result<Self> {
        if coefficients.len() != basis.num_coefficients() {
            return Err(Error::DimensionMismatch(format!(
                "basis {} expects {} coefficients, got {}",
                basis.name(),
                basis.num_coefficients(),
                coefficients.len()
            )));
        }
        Ok(Self {
            basis,
            coefficients,
        })
    }

    pub fn basis(&self) -> &Arc<dyn BasisFn> {
        &self.basis
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn with_coefficients(&self, coefficients: DVector<f64>) -> Result<Self> {
        BasisModel::new(self.basis.clone(), coefficients)
    }

    /// Evaluates `[phi_1(x)^T theta, ..., phi_Dout(x)^T theta]`.
    pub fn predict_one(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.basis.dim_in() {
            return Err(Error::DimensionMismatch(format!(
                "basis {} expects {} inputs, got {}",
                self.basis.name(),
                self.basis.dim_in(),
                x.len()
            )));
        }
        let phi = self.basis.features(x);
        if phi.ncols() != self.coefficients.len() || phi.nrows() != self.basis.dim_out() {
            return Err(Error::DimensionMismatch(format!(
                "basis {} returned a {}x{} feature block",
                self.basis.name(),
                phi.nrows(),
                phi.ncols()
            )));
        }
        Ok(&phi * &self.coefficients)
    }

    /// Row-per-sample mean predictions for an input matrix.
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(inputs.nrows(), self.basis.dim_out());
        let mut row = vec![0.0; inputs.ncols()];
        for r in 0..inputs.nrows() {
            for c in 0..inputs.ncols() {
                row[c] = inputs[(r, c)];
            }
            let y = self.predict_one(&row)?;
            for c in 0..y.len() {
                out[(r, c)] = y[c];
            }
        }
        Ok(out)
    }

    /// Stacked feature matrix: for each sample, the `dim_out` feature rows,
    /// giving `(N * dim_out) x M` overall. Targets stack the same way.
    pub fn stacked_features(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = inputs.nrows();
        let d_out = self.basis.dim_out();
        let m = self.basis.num_coefficients();
        let mut phi = DMatrix::zeros(n * d_out, m);
        let mut row = vec![0.0; inputs.ncols()];
        for r in 0..n {
            for c in 0..inputs.ncols() {
                row[c] = inputs[(r, c)];
            }
            let block = self.basis.features(&row);
            for i in 0..d_out {
                for j in 0..m {
                    phi[(r * d_out + i, j)] = block[(i, j)];
                }
            }
        }
        phi
    }

    /// Targets stacked to match `stacked_features` row order.
    pub fn stack_targets(targets: &DMatrix<f64>) -> DVector<f64> {
        let n = targets.nrows();
        let d_out = targets.ncols();
        DVector::from_fn(n * d_out, |k, _| targets[(k / d_out, k % d_out)])
    }
}

/// Basis defined by a plain function pointer/closure; covers the toy and VIA models.
pub struct ClosureBasis<F> {
    name: String,
    dim_in: usize,
    dim_out: usize,
    num_coefficients: usize,
    f: F,
}

impl<F> ClosureBasis<F>
where
    F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    pub fn new(
        name: impl Into<String>,
        dim_in: usize,
        dim_out: usize,
        num_coefficients: usize,
        f: F,
    ) -> Self {
        Self {
            name: name.into(),
            dim_in,
            dim_out,
            num_coefficients,
            f,
        }
    }
}

impl<F> BasisFn for ClosureBasis<F>
where
    F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn num_coefficients(&self) -> usize {
        self.num_coefficients
    }
    fn features(&self, x: &[f64]) -> DMatrix<f64> {
        (self.f)(x)
    }
    fn name(&self) -> &str {
        &self.name
    }
}
