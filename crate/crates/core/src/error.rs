use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("covariance factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("invalid sample count {0}; at least one sample is required")]
    InvalidCount(usize),

    #[error("too few samples: need more than {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid variance floor {0}; must be positive")]
    InvalidFloor(f64),

    #[error("dimension {n} exceeds the enumeration limit of {limit}")]
    DimensionTooLarge { n: usize, limit: usize },

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("solver did not converge after {sweeps} sweeps")]
    MaxIterationsExceeded { sweeps: usize },

    #[error("malformed CSV header: {0}")]
    MalformedHeader(String),

    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    NonNumericCell {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image file: {0}")]
    CorruptFile(String),

    #[error("geometry does not fit the image: {0}")]
    GeometryTooLarge(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used by the command-line exit-code contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Solver,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::InvalidFloor(_) => {
                ErrorKind::Usage
            }
            Error::DimensionMismatch(_)
            | Error::NotPositiveSemidefinite(_)
            | Error::InvalidCount(_)
            | Error::TooFewSamples { .. }
            | Error::InvalidSupport(_)
            | Error::NonFinite(_)
            | Error::MalformedHeader(_)
            | Error::NonNumericCell { .. }
            | Error::RaggedRow { .. }
            | Error::UnsupportedFormat(_)
            | Error::CorruptFile(_)
            | Error::GeometryTooLarge(_)
            | Error::Io { .. } => ErrorKind::Data,
            Error::FactorizationFailure(_)
            | Error::DimensionTooLarge { .. }
            | Error::SingularSystem(_)
            | Error::MaxIterationsExceeded { .. } => ErrorKind::Solver,
            Error::Stage { source, .. } => source.kind(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
