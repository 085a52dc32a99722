//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid label value {0} (allowed: 0, 1, 2, 4)")]
    InvalidLabel(i64),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported interpolation: {0}")]
    UnsupportedInterpolation(String),

    #[error("empty component")]
    EmptyComponent,

    #[error("format error in {path}: {kind}")]
    Format { path: PathBuf, kind: FormatError },

    #[error(transparent)]
    Segmenter(#[from] SegmenterError),

    #[error("all {0} origins of the pass failed; first error: {1}")]
    PassFailed(usize, Box<Error>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failures while decoding or encoding a volume file.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic {0:?}")]
    BadMagic(Vec<u8>),
    #[error("two-file NIfTI (.hdr/.img) is not supported")]
    UnsupportedForm,
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported format version {0}")]
    VersionMismatch(u32),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("data length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid label data: {0}")]
    InvalidLabels(String),
    #[error("unknown file extension")]
    UnknownExtension,
}

/// Failures of a segmenter invocation. Each maps to a distinct variant so
/// callers can tell a crash from a timeout from bad output.
#[derive(Debug, Error)]
pub enum SegmenterError {
    #[error("segmenter exited with status {code:?}: {stderr}")]
    ProcessFailed { code: Option<i32>, stderr: String },
    #[error("segmenter did not finish within {0} s")]
    Timeout(u64),
    #[error("segmenter could not be started: {0}")]
    Spawn(String),
    #[error("segmenter output {0} is missing")]
    MissingOutput(PathBuf),
    #[error("segmenter output is invalid: {0}")]
    InvalidOutput(String),
    #[error("segmenter output dims {found:?} do not match input dims {expected:?}")]
    DimensionMismatch {
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("segmenter input is invalid: {0}")]
    InvalidInput(String),
}

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Input,
    Segmenter,
    Internal,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, kind: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            kind,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) => ErrorClass::Config,
            Error::Format { .. }
            | Error::Io { .. }
            | Error::InvalidVolume(_)
            | Error::InvalidLabel(_)
            | Error::DimensionMismatch(_)
            | Error::Degenerate(_)
            | Error::UnsupportedInterpolation(_) => ErrorClass::Input,
            Error::Segmenter(_) => ErrorClass::Segmenter,
            Error::PassFailed(_, inner) => match inner.class() {
                ErrorClass::Segmenter => ErrorClass::Segmenter,
                other => other,
            },
            Error::EmptyComponent => ErrorClass::Internal,
        }
    }
}
