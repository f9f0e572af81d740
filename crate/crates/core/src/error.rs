use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("entry ({row}, {col}) has non-positive or non-finite value {value}")]
    InvalidValue { row: usize, col: usize, value: f64 },

    #[error("duplicate entry ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },

    #[error("duplicate identifier {0:?}")]
    DuplicateIdentifier(String),

    #[error("unknown document identifier {0:?}")]
    UnknownDocument(String),

    #[error("unknown user identifier {0:?}")]
    UnknownUser(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested {requested} {what} but only {available} exist")]
    SubsetTooLarge {
        what: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("word index {0} does not occur in any document")]
    AbsentWord(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model kind {model} does not match observations of kind {observations}")]
    KindMismatch {
        model: &'static str,
        observations: &'static str,
    },

    #[error("posterior normaliser is zero for observation {0}")]
    ZeroNormaliser(String),

    #[error("holdout split left no training observations")]
    EmptyTraining,

    #[error("no observations to train on")]
    EmptyObservations,

    #[error("duplicate document {0} in ranked list")]
    DuplicateRanked(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}
