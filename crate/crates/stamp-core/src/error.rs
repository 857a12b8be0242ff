//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, StampError>;

/// Errors produced by tensor construction, quantization, transforms,
/// allocation, synthesis and file IO.
#[derive(Debug, Error)]
pub enum StampError {
    /// Operand shapes are incompatible.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input data violates an invariant (NaN/Inf, empty, out of domain).
    #[error("invalid data: {0}")]
    Data(String),

    /// A transform or quantizer was configured with incompatible parameters.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Bit allocation could not be computed.
    #[error("allocation error: {0}")]
    Allocation(String),

    /// An iterative numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Tensor/CSV file ingestion or emission failed.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for StampError {
    fn from(e: std::io::Error) -> Self {
        StampError::Io(e.to_string())
    }
}
