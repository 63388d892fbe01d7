use thiserror::Error;

use crate::dynamics::Trajectory;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The operation needs something the potential does not provide
    /// (typically a Hessian).
    #[error("capability unavailable: {0}")]
    Capability(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("integration failed at t = {t}: step size underflow")]
    IntegrationFailure { t: f64, partial: Box<Trajectory> },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("level r = {r} not reached along any start direction")]
    LevelNotReached { r: f64 },

    #[error("degenerate sample set: {0}")]
    DegenerateSamples(String),

    #[error("distances reach the rounding floor: {0}")]
    RoundingFloor(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
