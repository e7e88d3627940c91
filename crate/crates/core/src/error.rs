use thiserror::Error;

/// Errors produced by the surrogate library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("line {line}: field `{field}` out of range: {value}")]
    Validation {
        line: usize,
        field: String,
        value: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("feature order mismatch: expected {expected:?}, found {found:?}")]
    FeatureMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("unknown feature `{name}`; valid names: {}", valid.join(", "))]
    UnknownFeature { name: String, valid: Vec<String> },

    #[error("coefficient count mismatch: expected {expected}, got {got}")]
    CoefficientCount { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
