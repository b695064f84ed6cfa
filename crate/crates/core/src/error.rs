use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error class, used by the command-line front end to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("duplicate sample_id {0:?}")]
    DuplicateSampleId(String),

    #[error("sample {sample_id:?}: {message}")]
    InvalidSample { sample_id: String, message: String },

    #[error("token offsets are misaligned at token {index}: {message}")]
    Alignment { index: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need at least 3 distinct problem ids to form three splits, found {0}")]
    TooFewProblems(usize),

    #[error("sample {0:?} has no code span")]
    MissingCode(String),

    #[error("sample {0:?} has an empty token sequence")]
    EmptyTokens(String),

    #[error("sample {sample_id:?} is missing required field `{field}`")]
    MissingField { sample_id: String, field: &'static str },

    #[error("value {0} outside [0, 1]")]
    Domain(f64),

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("group {0:?} has no members")]
    DegenerateGroup(String),

    #[error("unknown group {0:?}")]
    UnknownGroup(String),

    #[error("membership row has {got} entries, model expects {expected}")]
    Arity { expected: usize, got: usize },

    #[error("row count mismatch: expected {expected} rows, got {got}")]
    RowMismatch { expected: usize, got: usize },

    #[error("training labels are all {0}; a logistic fit is degenerate on single-class data")]
    SingleClass(u8),

    #[error("group columns are linearly dependent: {0:?}")]
    RankDeficient(Vec<String>),

    #[error("unknown source layout: missing keys {missing:?} (expected keys {expected:?})")]
    UnknownLayout {
        missing: Vec<String>,
        expected: Vec<String>,
    },

    #[error("malformed document: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Config(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}
