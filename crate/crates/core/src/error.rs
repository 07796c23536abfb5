//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("unknown channel {name:?}; available: {available:?}")]
    UnknownChannel {
        name: String,
        available: Vec<String>,
    },

    #[error(
        "harmonic {harmonic} of {frequency_hz} Hz is at or above the Nyquist rate {nyquist_hz} Hz"
    )]
    Aliasing {
        frequency_hz: f64,
        harmonic: usize,
        nyquist_hz: f64,
    },

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    NumericalFailure { iteration: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("corrupt file {path}: {message}")]
    CorruptFile { path: String, message: String },

    #[error("unsupported format version: {0}")]
    Version(String),

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown method {name:?}; available: {available:?}")]
    UnknownMethod {
        name: String,
        available: Vec<&'static str>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
