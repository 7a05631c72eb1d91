//! Adam with bias correction, keras-style defaults.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// First/second moment accumulators, reusable across steps.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: DVector<f64>,
    v: DVector<f64>,
    t: u64,
    params: AdamParams,
}

impl AdamState {
    pub fn new(dim: usize, params: AdamParams) -> Self {
        Self {
            m: DVector::zeros(dim),
            v: DVector::zeros(dim),
            t: 0,
            params,
        }
    }

    /// Applies one bias-corrected update in place.
    pub fn step(&mut self, x: &mut DVector<f64>, grad: &DVector<f64>) -> Result<()> {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "adam gradient at step {}",
                self.t + 1
            )));
        }
        self.t += 1;
        let p = &self.params;
        let bc1 = 1.0 - p.beta1.powi(self.t as i32);
        let bc2 = 1.0 - p.beta2.powi(self.t as i32);
        for d in 0..x.len() {
            self.m[d] = p.beta1 * self.m[d] + (1.0 - p.beta1) * grad[d];
            self.v[d] = p.beta2 * self.v[d] + (1.0 - p.beta2) * grad[d] * grad[d];
            let m_hat = self.m[d] / bc1;
            let v_hat = self.v[d] / bc2;
            x[d] -= p.lr * m_hat / (v_hat.sqrt() + p.eps);
        }
        Ok(())
    }
}

/// Runs `steps` Adam updates driven by a stochastic gradient callback.
pub fn adam_step_loop<F, R>(
    mut stochastic_gradient: F,
    x0: &DVector<f64>,
    steps: usize,
    params: AdamParams,
    rng: &mut R,
) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>, &mut R) -> DVector<f64>,
    R: rand::Rng,
{
    let mut x = x0.clone();
    let mut state = AdamState::new(x.len(), params);
    for _ in 0..steps {
        let grad = stochastic_gradient(&x, rng);
        state.step(&mut x, &grad)?;
    }
    Ok(x)
}
