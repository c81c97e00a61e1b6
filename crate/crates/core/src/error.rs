use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Fock space: {0}")]
    InvalidSpace(String),

    #[error("mode index {mode} out of range for a {modes}-mode space")]
    InvalidMode { mode: usize, modes: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Liouvillian dimension {dim} exceeds the configured cap {cap}")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("steady-state solve failed: {reason} (residual {residual:e})")]
    SolverFailure { reason: String, residual: f64 },

    #[error(
        "iterative solver did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("trajectory aborted at t = {time}: {reason}")]
    TrajectoryBlowUp { time: f64, reason: String },

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NewtonFailure { iterations: usize, residual: f64 },

    #[error("invalid bracket: {0}")]
    InvalidBracket(String),

    #[error("inconclusive synchronization classification: {0}")]
    Inconclusive(String),

    #[error("manifold is not invariant under H (leakage {leakage:e})")]
    ManifoldNotInvariant { leakage: f64 },

    #[error("singular parameter combination: {0}")]
    Singular(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
