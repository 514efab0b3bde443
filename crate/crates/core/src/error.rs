use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the feature pipeline or the learning stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("signal contains no samples")]
    EmptySignal,

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("duplicate manifest entry: {0}")]
    DuplicateEntry(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("FFT length {n_fft} is shorter than the signal ({len} samples)")]
    Length { n_fft: usize, len: usize },

    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("too few extrema to build an envelope ({found})")]
    TooFewExtrema { found: usize },

    #[error("sequence is not oscillatory")]
    NotOscillatory,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("SMOTE failed: {0}")]
    Smote(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("model error: {0}")]
    Model(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
