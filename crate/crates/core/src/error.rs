use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the sketch engine.
#[derive(Debug, Error)]
pub enum Error {
    /// The query document could not be parsed.
    #[error("query parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// The query is well-formed but violates a structural rule.
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    /// The query shape is outside what the estimator supports (cyclic or disconnected).
    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),

    /// Filter predicate does not fit the column it references.
    #[error("configuration error: {0}")]
    Config(String),

    /// Sketches built under different configurations were combined.
    #[error("configuration mismatch: {0}")]
    Mismatch(String),

    /// A tuple does not line up with the joined attributes of its relation.
    #[error("tuple error: {0}")]
    Tuple(String),

    /// A computation would exceed its work budget.
    #[error("budget exceeded: {0}")]
    Budget(String),

    /// Bad argument to a numeric helper.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data problems (CSV contents, unparsable cells).
    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },

    /// Malformed sketch file.
    #[error("sketch file format error: {0}")]
    Format(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the query document or by mismatched inputs,
    /// as opposed to the underlying data files.
    pub fn is_query_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidQuery(_)
                | Error::UnsupportedQuery(_)
                | Error::Config(_)
                | Error::Mismatch(_)
                | Error::Budget(_)
                | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
