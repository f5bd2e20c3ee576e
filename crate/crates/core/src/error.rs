use thiserror::Error;

/// Errors raised by grid construction, solvers and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("eta construction rejected: {0}")]
    EtaRejected(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("factorization failed: matrix not positive definite at row {row}")]
    NotPositiveDefinite { row: usize },

    #[error("linear solve did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("carleman audit: rhs vanished while lhs = {lhs:e} (seed {seed})")]
    DegenerateRhs { lhs: f64, seed: u64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
