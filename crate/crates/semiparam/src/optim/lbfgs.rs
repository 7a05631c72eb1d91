//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::optim::ObjectiveEvaluation;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
    pub armijo_c1: f64,
    pub contraction: f64,
    pub max_backtracks: usize,
    /// Relative objective-decrease floor: two consecutive accepted steps
    /// improving by less than `value_tol * (1 + |f|)` stop the run.
    pub value_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            grad_tol: 1e-6,
            memory: 10,
            armijo_c1: 1e-4,
            contraction: 0.5,
            max_backtracks: 40,
            value_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    /// Gradient infinity norm fell below `grad_tol`.
    Converged,
    /// Iteration budget exhausted; best iterate returned.
    MaxIters,
    /// Line search could not find a decrease; best iterate returned.
    LineSearchStalled,
    /// Objective stopped decreasing meaningfully before the gradient test.
    ValueConverged,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub status: LbfgsStatus,
    pub iters: usize,
}

struct Correction {
    s: DVector<f64>,
    y: DVector<f64>,
    rho: f64,
}

fn two_loop(grad: &DVector<f64>, history: &VecDeque<Correction>) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for c in history.iter().rev() {
        let alpha = c.rho * c.s.dot(&q);
        q.axpy(-alpha, &c.y, 1.0);
        alphas.push(alpha);
    }
    if let Some(last) = history.back() {
        let gamma = last.s.dot(&last.y) / last.y.norm_squared();
        q *= gamma;
    }
    for (c, alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = c.rho * c.y.dot(&q);
        q.axpy(alpha - beta, &c.s, 1.0);
    }
    q
}

/// Differentiable objective. The line search only needs values, so costly
/// gradient work can be skipped for trial points.
pub trait Objective {
    fn value(&mut self, x: &DVector<f64>) -> Result<f64>;
    fn value_grad(&mut self, x: &DVector<f64>) -> Result<ObjectiveEvaluation>;
}

impl<F> Objective for F
where
    F: FnMut(&DVector<f64>) -> Result<ObjectiveEvaluation>,
{
    fn value(&mut self, x: &DVector<f64>) -> Result<f64> {
        self(x).map(|e| e.value)
    }
    fn value_grad(&mut self, x: &DVector<f64>) -> Result<ObjectiveEvaluation> {
        self(x)
    }
}

/// Minimizes `objective` from `x0`. Non-finite values during the line search
/// reject the step; a non-finite objective at `x0` is an error.
pub fn lbfgs_minimize<F>(
    mut objective: F,
    x0: &DVector<f64>,
    opts: &LbfgsOptions,
) -> Result<LbfgsOutcome>
where
    F: Objective,
{
    let mut x = x0.clone();
    let mut eval = objective.value_grad(&x)?;
    if !eval.value.is_finite() || eval.gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("objective at initial point".into()));
    }

    let mut history: VecDeque<Correction> = VecDeque::with_capacity(opts.memory);
    let mut iters = 0;
    let mut status = LbfgsStatus::MaxIters;
    let mut small_decreases = 0usize;

    while iters < opts.max_iters {
        let grad_inf = eval.gradient.amax();
        if grad_inf <= opts.grad_tol {
            status = LbfgsStatus::Converged;
            break;
        }

        let mut direction = -two_loop(&eval.gradient, &history);
        let mut slope = eval.gradient.dot(&direction);
        if !(slope < 0.0) || !direction.iter().all(|d| d.is_finite()) {
            // curvature history unusable; restart with steepest descent
            history.clear();
            direction = -&eval.gradient;
            slope = -eval.gradient.norm_squared();
        }

        // backtracking Armijo search; without curvature history the unit step
        // can be far too long, so start at 1/|g|_inf then
        let mut step = if history.is_empty() {
            (1.0 / grad_inf).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = &x + step * &direction;
            match objective.value(&trial) {
                Ok(value)
                    if value.is_finite()
                        && value <= eval.value + opts.armijo_c1 * step * slope =>
                {
                    accepted = Some(trial);
                    break;
                }
                _ => step *= opts.contraction,
            }
        }

        let new_x = match accepted {
            Some(trial) => trial,
            None => {
                status = LbfgsStatus::LineSearchStalled;
                break;
            }
        };
        let new_eval = objective.value_grad(&new_x)?;
        if !new_eval.value.is_finite() || new_eval.gradient.iter().any(|g| !g.is_finite()) {
            status = LbfgsStatus::LineSearchStalled;
            break;
        }

        let s = &new_x - &x;
        let y = &new_eval.gradient - &eval.gradient;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back(Correction {
                rho: 1.0 / sy,
                s,
                y,
            });
        }

        let decrease = eval.value - new_eval.value;
        x = new_x;
        eval = new_eval;
        iters += 1;

        if decrease <= opts.value_tol * (1.0 + eval.value.abs()) {
            small_decreases += 1;
            if small_decreases >= 2 {
                status = LbfgsStatus::ValueConverged;
                break;
            }
        } else {
            small_decreases = 0;
        }
    }

    if status == LbfgsStatus::MaxIters && eval.gradient.amax() <= opts.grad_tol {
        status = LbfgsStatus::Converged;
    }

    Ok(LbfgsOutcome {
        x,
        value: eval.value,
        status,
        iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn run<F>(f: F, x0: DVector<f64>) -> LbfgsOutcome
    where
        F: Fn(&DVector<f64>) -> ObjectiveEvaluation,
    {
        lbfgs_minimize(|x: &DVector<f64>| Ok(f(x)), &x0, &LbfgsOptions::default()).unwrap()
    }

    #[test]
    fn scalar_quadratic() {
        let out = run(
            |x| ObjectiveEvaluation {
                value: (x[0] - 3.0).powi(2),
                gradient: dvector![2.0 * (x[0] - 3.0)],
            },
            dvector![0.0],
        );
        assert_abs_diff_eq!(out.x[0], 3.0, epsilon = 1e-8);
        assert_eq!(out.status, LbfgsStatus::Converged);
    }

    #[test]
    fn rosenbrock() {
        let out = run(
            |x| {
                let (a, b) = (x[0], x[1]);
                ObjectiveEvaluation {
                    value: (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                    gradient: dvector![
                        -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                        200.0 * (b - a * a)
                    ],
                }
            },
            dvector![-1.2, 1.0],
        );
        assert_abs_diff_eq!(out.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(out.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn spd_quadratic_matches_direct_solve() {
        let a: DMatrix<f64> = dmatrix![4.0, 1.0, 0.0; 1.0, 3.0, 0.5; 0.0, 0.5, 2.0];
        let b = dvector![1.0, -2.0, 0.7];
        let expected = a.clone().lu().solve(&b).unwrap();
        let opts = LbfgsOptions {
            grad_tol: 1e-12,
            ..Default::default()
        };
        let out = lbfgs_minimize(
            |x: &DVector<f64>| {
                Ok(ObjectiveEvaluation {
                    value: 0.5 * x.dot(&(&a * x)) - b.dot(x),
                    gradient: &a * x - &b,
                })
            },
            &dvector![0.0, 0.0, 0.0],
            &opts,
        )
        .unwrap();
        for d in 0..3 {
            assert_abs_diff_eq!(out.x[d], expected[d], epsilon = 1e-8);
        }
    }

    #[test]
    fn monotone_in_accepted_iterates() {
        let mut values = Vec::new();
        let _ = lbfgs_minimize(
            |x: &DVector<f64>| {
                let v = (x[0] - 3.0).powi(2) + x[1].powi(2);
                Ok(ObjectiveEvaluation {
                    value: v,
                    gradient: dvector![2.0 * (x[0] - 3.0), 2.0 * x[1]],
                })
            },
            &dvector![10.0, -5.0],
            &LbfgsOptions::default(),
        )
        .map(|out| values.push(out.value));
        // final value never exceeds the initial one
        assert!(values[0] <= (10.0f64 - 3.0).powi(2) + 25.0);
    }

    #[test]
    fn non_finite_start_is_error() {
        let r = lbfgs_minimize(
            |_x: &DVector<f64>| {
                Ok(ObjectiveEvaluation {
                    value: f64::NAN,
                    gradient: dvector![0.0],
                })
            },
            &dvector![0.0],
            &LbfgsOptions::default(),
        );
        assert!(r.is_err());
    }
}
