//! Error types shared across the crate.

use thiserror::Error;

/// A violated invariant of a row-stochastic matrix.
///
/// Reported by validation with the first offending row; the `Display`
/// form is the human-readable violation report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixViolation {
    #[error("matrix has {rows} rows but row {row} has {cols} entries")]
    RaggedRow {
        rows: usize,
        row: usize,
        cols: usize,
    },
    #[error("row {row} entry {col} is {value}, outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
}

/// Coarse classification used by callers that map errors onto process
/// exit codes: bad inputs are distinguished from numerical failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed, inconsistent, or invariant-violating input.
    Validation,
    /// A computation that could not be completed in finite arithmetic.
    Numerical,
    /// Underlying I/O failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Matrix(#[from] MatrixViolation),

    #[error("empty power trace")]
    EmptyTrace,

    #[error("constant power trace: zero range cannot be discretized")]
    ConstantTrace,

    #[error("value-error denominator is not positive: reference values sum to {0}")]
    NonPositiveDenominator(f64),

    #[error(
        "policy step {t} places probability {prob} on the impossible transition {from} -> {to}"
    )]
    InfiniteKl {
        t: usize,
        from: usize,
        to: usize,
        prob: f64,
    },

    #[error("numerical range exceeded: {0}")]
    Numerical(String),

    #[error("unsupported schema version {found} for {what} (this build reads version {expected})")]
    SchemaVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Invalid { .. }
            | Error::DimensionMismatch(_)
            | Error::Matrix(_)
            | Error::EmptyTrace
            | Error::ConstantTrace
            | Error::SchemaVersion { .. }
            | Error::Parse(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Validation,
            Error::NonPositiveDenominator(_) | Error::InfiniteKl { .. } | Error::Numerical(_) => {
                ErrorClass::Numerical
            }
            Error::Io(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
