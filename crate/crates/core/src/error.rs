use thiserror::Error;

/// Errors produced by the signal, smoothing, embedding and regression routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("integration diverged at t = {time}")]
    IntegrationDiverged { time: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("grid mismatch: {what} = {value} is not a positive multiple of h = {h}")]
    GridMismatch { what: &'static str, value: f64, h: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("SVR solver did not converge after {iterations} pair updates (KKT violation {violation:.3e})")]
    Convergence { iterations: usize, violation: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
