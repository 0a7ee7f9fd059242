use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A construction step cannot be carried out with the given parameters.
    #[error("infeasible at stage `{stage}`: {reason}")]
    Infeasible { stage: String, reason: String },

    /// A computed quantity was NaN or infinite.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed text input.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn infeasible(stage: &str, reason: impl Into<String>) -> Self {
        Error::Infeasible {
            stage: stage.to_string(),
            reason: reason.into(),
        }
    }

    /// Attach a stage name to an infeasibility raised by a lower layer.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Infeasible { reason, .. } => Error::Infeasible {
                stage: stage.to_string(),
                reason,
            },
            other => other,
        }
    }
}
