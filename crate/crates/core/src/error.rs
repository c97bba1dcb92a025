use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("Hilbert space dimension {dim} exceeds the dense cap {cap}")]
    Resource { dim: usize, cap: usize },

    #[error("eigensolver failed: {0}")]
    Solver(String),

    #[error("degenerate unfolding fit: {0}")]
    DegenerateFit(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("unknown operator label `{0}`")]
    UnknownOperator(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
