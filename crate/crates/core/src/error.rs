use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or invalid content in an input file. `line` is 1-based.
    #[error("{}: {message}", location(path, *line))]
    Data {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("single-class input")]
    SingleClass,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("too few participants: need at least {needed}, found {found}")]
    TooFewParticipants { needed: usize, found: usize },

    #[error("too few classes: need at least 2, found {0}")]
    TooFewClasses(usize),

    #[error("label {0} is not one of the configured classes")]
    UnknownLabel(u8),

    #[error("empty confusion matrix")]
    EmptyMatrix,

    /// Paired differences have zero variance but a non-zero mean, so no
    /// finite t statistic exists.
    #[error("degenerate paired differences: zero variance with mean {mean}")]
    DegenerateVariance { mean: f64 },

    #[error("serialization: {0}")]
    Serde(String),
}

fn location(path: &std::path::Path, line: Option<usize>) -> String {
    match line {
        Some(l) => format!("{}:{}", path.display(), l),
        None => path.display().to_string(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the content of input files or datasets
    /// rather than by API misuse.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Data { .. }
                | Error::SingleClass
                | Error::TooFewParticipants { .. }
                | Error::TooFewClasses(_)
                | Error::UnknownLabel(_)
                | Error::EmptyMatrix
                | Error::DegenerateVariance { .. }
                | Error::Serde(_)
        )
    }
}
