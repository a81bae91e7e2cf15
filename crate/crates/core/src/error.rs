//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two tensors disagree in shape or length.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },
    /// A computation produced NaN or infinity.
    #[error("non-finite value in {tensor}")]
    NonFinite { tensor: &'static str },
    /// A neuron's bias gradient is too small to divide by.
    #[error("not invertible: |bias gradient| {magnitude:.3e} <= {threshold:.3e}")]
    NonInvertible { magnitude: f64, threshold: f64 },
    /// An argument violates a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// A configuration value is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A PPM/PGM byte stream failed to parse.
    #[error("PNM parse error at byte {offset}: {message}")]
    PnmParse { offset: usize, message: String },
    /// An I/O failure while reading or writing files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
