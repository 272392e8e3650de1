use thiserror::Error;

/// Errors produced by the preference-learning engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("correlation undefined: input vector is constant")]
    ConstantVector,

    #[error("invalid uncertainty level {0}; expected 1..=4")]
    InvalidLevel(i64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid preference pair: {0}")]
    InvalidPair(String),

    #[error("Laplace mode did not converge after {iterations} iterations (|grad|_inf = {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("Newton step failed at iteration {iteration}: {reason}")]
    NewtonStepFailed { iteration: usize, reason: String },

    #[error("calibration target {target} outside the curve tail [{low}, {high}]")]
    TargetOutsideTail { target: f64, low: f64, high: f64 },

    #[error("calibration curve failed at u = {u}: {source}")]
    CurveFailed {
        u: f64,
        #[source]
        source: Box<CoreError>,
    },

    #[error("empty feature domain")]
    EmptyDomain,
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
