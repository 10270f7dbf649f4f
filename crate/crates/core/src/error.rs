use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("no rows")]
    NoRows,

    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric { row: usize, column: usize, value: String },

    #[error("row {row}, column {column}: value is not finite")]
    NonFinite { row: usize, column: usize },

    #[error("dataset has a single class; at least two are required")]
    SingleClass,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no must-link constraints could be drawn (every class has a single member)")]
    NoPositives,

    #[error("constraint set must contain both similar and dissimilar pairs")]
    OneSidedConstraints,

    #[error("empty input")]
    Empty,

    #[error("k = {k} is outside [1, {max}]")]
    KOutOfRange { k: usize, max: usize },

    #[error("class {class} has {size} gallery members; retrieval needs more than {top_k}")]
    ClassTooSmall { class: usize, size: usize, top_k: usize },

    #[error("test index {index} entered the constraint set of run {run}, fold {fold}")]
    Leakage { run: usize, fold: usize, index: usize },

    #[error("reports do not cover the same datasets: {0}")]
    MismatchedReports(String),

    #[error("malformed model file: {0}")]
    Format(String),
}

impl Error {
    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::KOutOfRange { .. }
                | Error::ClassTooSmall { .. }
        )
    }
}
