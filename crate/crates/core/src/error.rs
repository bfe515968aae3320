use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),

    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("read voltage {v_read} V would disturb the device (thresholds {v_on} V / {v_off} V)")]
    DestructiveRead { v_read: f64, v_on: f64, v_off: f64 },

    #[error("pulse schedule is invalid: {0}")]
    Schedule(String),

    #[error("cell ({row}, {col}) is outside a {rows}x{cols} crossbar")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("iteration failed to converge: {0}")]
    Convergence(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("image too small for {metric}: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall {
        metric: &'static str,
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("malformed PGM {path}: {reason}")]
    MalformedImage { path: PathBuf, reason: String },

    #[error("invalid variation spec: {0}")]
    Variation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
