use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto the fixed exit codes
/// via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("schema violation at {pointer}: {message}")]
    SchemaViolation { pointer: String, message: String },

    #[error("resource guard tripped: {0}")]
    ResourceGuard(String),

    #[error("property failure in {property}: {detail}")]
    PropertyFailure { property: String, detail: String },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("degenerate least-squares system after {retries} retries")]
    DegenerateSystem { retries: u32 },

    #[error("ill-conditioned fit (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("query {index} failed: {source}")]
    QueryFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}, column `{column}`: malformed cell {value:?}")]
    MalformedCell {
        line: usize,
        column: String,
        value: String,
    },

    #[error("unsupported model format `{0}`; convert to the native tree JSON first")]
    UnsupportedModelFormat(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code contract: 0 success, 1 property failure, 2 input schema
    /// error, 3 dimension mismatch, 4 resource guard.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. } => 3,
            Error::ResourceGuard(_) => 4,
            Error::SchemaViolation { .. }
            | Error::InvalidParameter { .. }
            | Error::MalformedCell { .. }
            | Error::UnsupportedModelFormat(_)
            | Error::Io { .. }
            | Error::Json { .. }
            | Error::Csv { .. } => 2,
            Error::QueryFailed { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SchemaViolation {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}
