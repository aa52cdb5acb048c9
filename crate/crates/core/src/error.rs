use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("training of `{model}` diverged (non-finite loss) at epoch {epoch}")]
    ModelDiverged { model: String, epoch: usize },

    #[error("incomparable curves: {0}")]
    IncomparableCurves(String),

    #[error("incomparable fingerprints `{left}` and `{right}`: {reason}")]
    IncomparableFingerprints {
        left: String,
        right: String,
        reason: String,
    },

    #[error(
        "artifact `{artifact}` was produced under config {found:016x}, expected {expected:016x}"
    )]
    ArtifactMismatch {
        artifact: String,
        expected: u64,
        found: u64,
    },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("{kind} checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum {
        kind: &'static str,
        stored: u32,
        computed: u32,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Names the model whose training diverged.
    pub fn for_model(self, model: &str) -> Self {
        match self {
            Error::TrainingDiverged { epoch } => Error::ModelDiverged {
                model: model.to_string(),
                epoch,
            },
            other => other,
        }
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }
}
