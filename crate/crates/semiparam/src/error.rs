use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("kernel matrix not positive definite (jitter exhausted at {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown method id: {0}")]
    UnknownMethod(String),
    #[error("simulation aborted: {0}")]
    SimulationAborted(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
