use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid axis range: start {start} must be below end {end} with at least 2 points (got {n_points})")]
    InvalidRange { start: f64, end: f64, n_points: usize },

    #[error("invalid substance profile `{name}`: {reason}")]
    InvalidProfile { name: String, reason: String },

    #[error("mixture needs at least one positive weight")]
    ZeroWeights,

    #[error("fluorescence width {width} cm-1 is not wideband (must exceed {min} cm-1, a quarter of the axis span)")]
    NarrowFluorescence { width: f64, min: f64 },

    #[error("signal has zero power; SNR is undefined")]
    ZeroPower,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("class {0} has no raw spectra")]
    EmptyClass(String),

    #[error("label {0} is degenerate: ROC needs at least one positive and one negative sample")]
    DegenerateLabel(usize),

    #[error("layer {index} ({kind}): {reason}")]
    ShapeChain { index: usize, kind: &'static str, reason: String },

    #[error("training diverged at {context}: loss is {loss}")]
    Divergence { context: String, loss: f64 },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated data: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("tensor dims overflow: {0}")]
    DimsOverflow(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch { expected: expected.into(), actual: actual.into() }
    }

    /// Coarse category used for CLI messages and exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Json(_) => ErrorCategory::Config,
            Error::Io(_) => ErrorCategory::Io,
            Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::Truncated { .. }
            | Error::DimsOverflow(_)
            | Error::Malformed { .. } => ErrorCategory::Format,
            Error::Divergence { .. } => ErrorCategory::Training,
            _ => ErrorCategory::InvalidInput,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    InvalidInput,
    Config,
    Io,
    Format,
    Training,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::InvalidInput => 2,
            ErrorCategory::Config => 3,
            ErrorCategory::Io => 4,
            ErrorCategory::Format => 5,
            ErrorCategory::Training => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::InvalidInput => "invalid input",
            ErrorCategory::Config => "config",
            ErrorCategory::Io => "io",
            ErrorCategory::Format => "format",
            ErrorCategory::Training => "training",
        }
    }
}
