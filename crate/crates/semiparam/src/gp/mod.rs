//! Exact Gaussian process regression with RBF-ARD kernel: the plain GP
//! baseline and the semi-parametric GP with a trainable parametric mean.

pub mod exact;
pub mod kernel;
pub mod multi;

pub use exact::{cholesky_with_jitter, FittedGp, GpFitOptions, GpProblem, GpSummary, MeanSpec};
pub use kernel::RbfArdKernel;
pub use multi::{multi_output_fit, MultiOutputGp, SharingMode};
