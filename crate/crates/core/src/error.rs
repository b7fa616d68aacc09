//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error at row {row}: {message}")]
    Ingestion { row: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("gap starting at index {start} runs for {run} steps, exceeding the fillable maximum of {max}")]
    GapTooLong { start: usize, run: usize, max: usize },

    #[error("length mismatch: {left} vs {right} ({context})")]
    LengthMismatch {
        left: usize,
        right: usize,
        context: String,
    },

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: String, message: String },

    #[error("series too short: {got} points, need at least {needed} ({context})")]
    SeriesTooShort {
        got: usize,
        needed: usize,
        context: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("innovation covariance is singular or non-positive at step {step}")]
    SingularInnovation { step: usize },

    #[error("filter failed at step {step}: {source}")]
    FilterStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-positive value at index {index}: {value} + epsilon {epsilon} <= 0")]
    NonPositiveLog {
        index: usize,
        value: f64,
        epsilon: f64,
    },

    #[error("constant column {0}: min-max scaling undefined")]
    ConstantColumn(String),

    #[error("all autoregressive candidates failed to fit")]
    AllCandidatesFailed,

    #[error("external predictions: {0}")]
    ExternalPredictions(String),

    #[error("unmatched model label in report pairing: {0}")]
    UnmatchedModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
