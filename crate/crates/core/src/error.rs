use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("{op}: input has {len} rows, needs at least {min}")]
    TooShort {
        op: &'static str,
        len: usize,
        min: usize,
    },

    #[error("invalid pool size {0}; must be at least 1")]
    InvalidPoolSize(usize),

    #[error("{0}: backward called without a matching forward")]
    MissingCache(&'static str),

    #[error("batch norm backward requires a train-mode forward")]
    InferModeBackward,

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("invalid label {0}; clicks must be 0 or 1")]
    InvalidLabel(f64),

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("model kind mismatch: model is {model}, input is {input}")]
    KindMismatch {
        model: &'static str,
        input: &'static str,
    },

    #[error("record {index}: {source}")]
    Record {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn at_record(self, index: usize) -> Self {
        Error::Record {
            index,
            source: Box::new(self),
        }
    }
}
