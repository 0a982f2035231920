use thiserror::Error;

/// Errors raised anywhere in the load-plan pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown {kind} value `{value}`")]
    Vocabulary { kind: &'static str, value: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot fit {what}: {reason}")]
    Fit { what: &'static str, reason: String },

    #[error("cannot split dataset: {0}")]
    Split(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("training aborted at epoch {epoch}, step {step}: {reason}")]
    Training {
        epoch: usize,
        step: usize,
        reason: String,
    },

    #[error("invalid probability vector: {0}")]
    Probability(String),

    #[error("unknown {kind} strategy `{name}` (registered: {registered})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        registered: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
