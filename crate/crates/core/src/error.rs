use thiserror::Error;

/// Errors raised by operator dynamics, analysis and stopping routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite state{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NonFinite { step: Option<usize> },

    #[error("{name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("empty event set")]
    EmptyEvents,

    #[error("joint contraction rate gamma = {gamma} is not below 1")]
    NotContractive { gamma: f64 },

    #[error("threshold epsilon = {epsilon} does not exceed the bounded-noise floor {floor}")]
    BelowNoiseFloor { epsilon: f64, floor: f64 },

    #[error("validity radius r = {r} does not exceed the noise-ball radius {ball}")]
    RadiusTooSmall { r: f64, ball: f64 },

    #[error("inverse bound undefined for gamma = 0")]
    DegenerateGamma,

    #[error("sampler failure: {0}")]
    Sampler(String),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.into(), reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
