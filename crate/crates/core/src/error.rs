use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad category of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Io,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("mask selects no voxels")]
    EmptyMask,

    #[error("at least 2 volumes required, got {0}")]
    TooFewVolumes(usize),

    #[error("index {index} out of bounds (len {len})")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("reference is constant over the included voxels; R² is undefined")]
    ConstantReference,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Format { .. } => ErrorKind::Io,
            Error::Numerical(_) | Error::NonFinite(_) | Error::ConstantReference => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Usage,
        }
    }

    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

/// Diagnostics produced while decoding volume files.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("file too short for header: need {expected} bytes, have {actual}")]
    TruncatedHeader { expected: usize, actual: usize },

    #[error("truncated data: expected {expected} bytes, found {actual}")]
    TruncatedData { expected: usize, actual: usize },

    #[error("bad magic {0:?}")]
    BadMagic(Vec<u8>),

    #[error("sizeof_hdr is {0}, expected 348")]
    BadHeaderSize(i32),

    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i32),

    #[error("unsupported dimensionality {0} (at most 4 supported)")]
    UnsupportedDimensionality(i64),

    #[error("invalid dimension {axis} = {value}")]
    InvalidDimension { axis: usize, value: i64 },

    #[error("unsupported file extension {0:?}")]
    UnsupportedExtension(String),

    #[error("vox_offset {0} is invalid")]
    BadVoxOffset(f32),

    #[error("non-finite voxel value at index {0}")]
    NonFiniteValue(usize),

    #[error("gzip stream: {0}")]
    Gzip(String),

    #[error("numeric table: {0}")]
    Table(String),
}
