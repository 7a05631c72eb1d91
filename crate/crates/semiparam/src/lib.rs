//! Semi-parametric model learning: parametric identification (LLS, SVR),
//! Gaussian process regression with parametric mean functions, variational
//! Bayesian networks with a parametric path, sequential/iterative composites,
//! scenario generators, and a seeded benchmark harness.

pub mod basis;
pub mod bnn;
pub mod compose;
pub mod dataset;
pub mod error;
pub mod gp;
pub mod harness;
pub mod metrics;
pub mod optim;
pub mod parametric;
pub mod scaler;
pub mod scenario;
pub mod simdyn;

pub use basis::{BasisFn, BasisModel, ClosureBasis};
pub use dataset::{Dataset, SplitTag};
pub use error::{Error, Result};
pub use metrics::{mean_nllh, rmse, rmse_pooled, Prediction};
pub use scaler::StandardScaler;
