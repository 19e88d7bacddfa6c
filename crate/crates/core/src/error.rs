use thiserror::Error;

/// Errors raised by model evaluation, fitting, simulation and inference.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Caller passed arguments that violate an API contract.
    #[error("usage error: {0}")]
    Usage(String),
    /// A parameter lies outside the domain of a distribution or link.
    #[error("domain error: {0}")]
    Domain(String),
    /// Observed data violate a model precondition.
    #[error("data error (row {row}): {message}")]
    Data { row: usize, message: String },
    /// A non-finite value appeared during optimization.
    #[error("numerical error at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },
    /// The search direction handed to the line search is not an ascent direction.
    #[error("direction is not an ascent direction (slope {slope})")]
    NotAscent { slope: f64 },
    /// An invalid simulation or optimizer configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Resampling-based inference could not produce an answer.
    #[error("inference error: {0}")]
    Inference(String),
}

pub type Result<T> = std::result::Result<T, Error>;
