use std::path::PathBuf;

use thiserror::Error;

use crate::tuning::CvRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// A DR iterate picked up a NaN or infinity. Round and iteration are 1-based.
    #[error("iteration diverged at round {round}, iteration {iteration} (lambda = {lambda})")]
    Divergence {
        round: usize,
        iteration: usize,
        lambda: f64,
    },

    #[error("NMSE is undefined: holdout ground truth is identically zero")]
    UndefinedMetric,

    #[error("every tuning candidate failed ({} tried)", table.len())]
    TuningFailed { table: Vec<CvRecord> },

    #[error("{path}: line {line}: {kind}")]
    Parse {
        path: PathBuf,
        line: usize,
        kind: ParseErrorKind,
    },

    #[error("incomplete grid: {total_missing} cell(s) missing, e.g. {shown}")]
    IncompleteGrid { total_missing: usize, shown: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Grammar violations in the text file formats.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("missing or wrong header, expected `{expected}`")]
    MissingHeader { expected: &'static str },
    #[error("malformed dims line: {0}")]
    BadDims(String),
    #[error("malformed scale line: {0}")]
    BadScale(String),
    #[error("non-numeric token `{0}`")]
    BadNumber(String),
    #[error("non-finite value `{0}`")]
    NonFinite(String),
    #[error("value count mismatch: dims require {expected} values, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("expected {expected} fields per entry, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("index {index} out of range 1..={extent} in mode {mode}")]
    IndexOutOfRange {
        mode: usize,
        index: i64,
        extent: usize,
    },
    #[error("duplicate entry, first seen on line {first_line}")]
    Duplicate { first_line: usize },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected end of file")]
    UnexpectedEof,
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
