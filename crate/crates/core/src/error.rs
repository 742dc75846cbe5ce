use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("solver failure in {stage}: relative residual {residual:e}")]
    SolverFailure { stage: String, residual: f64 },
    #[error("empty interior: {0}")]
    EmptyInterior(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("bad expression '{expr}': {reason}")]
    Expression { expr: String, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
