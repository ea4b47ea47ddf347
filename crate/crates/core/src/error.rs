use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A stick coordinate is undefined or degenerate at this point.
    #[error("boundary point: stick coordinate {index} is undefined or degenerate")]
    BoundaryPoint { index: usize },

    #[error("mass deficit: truncation remainder {remainder:e} exceeds {limit}")]
    MassDeficit { remainder: f64, limit: f64 },

    #[error("quadrature failed to converge: estimate {estimate:e}, error estimate {error_estimate:e}")]
    NonConvergence { estimate: f64, error_estimate: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("no uniform lower bound: inf(a_i ∧ b_i) = {0}")]
    NoUniformBound(f64),

    #[error("insufficient samples for {quantity}: stderr {stderr:e} exceeds 20% of {value:e}")]
    InsufficientSamples {
        quantity: String,
        value: f64,
        stderr: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
