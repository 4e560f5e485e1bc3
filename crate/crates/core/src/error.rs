use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("solvability residual {residual:.3e} exceeds tolerance at order ({j},{k})")]
    Solvability { j: usize, k: usize, residual: f64 },

    #[error("no root bracketed: {0}")]
    NoRoot(String),

    #[error("resolution limit reached at t = {t}: {reason}")]
    ResolutionLimit { t: f64, reason: String },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
