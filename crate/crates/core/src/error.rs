use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures shared by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("matrix `{name}` is not positive semidefinite (failed at loading {loading:e})")]
    NotPositiveSemidefinite { name: String, loading: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("incompatible fingerprints: {0}")]
    IncompatibleFingerprints(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {kind}")]
    Decode { path: PathBuf, kind: DecodeError },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Ways a binary file can fail to decode.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing bytes: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },
    #[error("zero dimension in header")]
    ZeroDimension,
    #[error("non-finite value in body")]
    NonFinite,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn decode(path: impl Into<PathBuf>, kind: DecodeError) -> Self {
        Error::Decode { path: path.into(), kind }
    }

    /// True for errors that come from the numerics rather than the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::NotPositiveSemidefinite { .. } | Error::DegenerateInput(_))
    }
}
