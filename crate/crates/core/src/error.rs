use thiserror::Error;

use crate::network::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain of its variable.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The network or evidence text could not be parsed.
    #[error("syntax error at {location}: {message}")]
    Syntax { location: String, message: String },

    #[error("invalid network: {0}")]
    Validation(ValidationReport),

    #[error("impossible evidence: the evidence has probability zero")]
    ImpossibleEvidence,

    #[error("state space too large: {0}")]
    StateSpaceTooLarge(String),

    #[error("learning error: {0}")]
    Learning(String),

    /// Every importance weight at a clique vanished.
    #[error("degenerate evidence at clique {clique}: all importance weights are zero")]
    DegenerateEvidence { clique: usize },

    #[error("degenerate sample set: total weight is zero")]
    ZeroWeight,

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn syntax(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Syntax {
            location: location.into(),
            message: message.into(),
        }
    }
}
