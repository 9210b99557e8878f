//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {format} data in {path}: {detail}")]
    Format {
        format: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("non-finite {field} value at row {row}")]
    NonFinite { field: &'static str, row: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: {left_name} has {left} entries, {right_name} has {right}")]
    LengthMismatch {
        left_name: &'static str,
        left: usize,
        right_name: &'static str,
        right: usize,
    },

    #[error("need at least {required} samples for {what}, got {actual}")]
    InsufficientSamples {
        what: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("k = {k} is out of range for an index of {m} points")]
    KOutOfRange { k: usize, m: usize },

    #[error("row {row} has zero norm and cannot be L2-normalized")]
    ZeroNorm { row: usize },

    #[error("no class with samples is present in the statistics")]
    NoClassPresent,

    #[error("covariance matrix is not positive definite even after shrinkage")]
    NotPositiveDefinite,

    #[error(
        "the wrong-prediction partition is empty; delta scores are undefined here. \
         Fall back to a logit score such as rlog or msp"
    )]
    EmptyWrongPartition,

    #[error("score vector is constant; rank statistics are undefined")]
    ConstantScore,

    #[error("{what} is identically zero")]
    DegenerateScale { what: &'static str },

    #[error("no samples accepted at threshold {gamma}; selective risk is undefined at coverage 0")]
    EmptySelection { gamma: f64 },

    #[error("hypothesis class {which} has no samples")]
    EmptyHypothesisClass { which: &'static str },

    #[error("NAURC is undefined: full risk equals the oracle AURC (all-correct or all-wrong)")]
    NaurcUndefined,

    #[error("unknown theorem id `{0}`")]
    UnknownTheorem(String),

    #[error("unknown score `{0}`")]
    UnknownScore(String),

    #[error("unknown dataset `{0}` in manifest")]
    UnknownDataset(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(format: &'static str, path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            format,
            path: path.into(),
            detail: detail.into(),
        }
    }
}
