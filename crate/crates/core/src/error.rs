use thiserror::Error;

/// Why a table failed to decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DecodeFailure {
    /// Peeling ran out of pure cells while `remaining` cells were still nonzero.
    #[error("peeling stalled with {remaining} nonzero cells")]
    Stall { remaining: usize },
    /// More pairs came out than the caller allowed.
    #[error("decoded more than {max_pairs} pairs")]
    Overflow { max_pairs: usize },
}

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("instance exceeds oracle size cap: {0}")]
    SizeLimit(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("decode failed: {0}")]
    Decode(#[from] DecodeFailure),

    #[error("protocol failure: {0}")]
    Protocol(String),

    #[error("malformed wire data: {0}")]
    Wire(String),

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ReconError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> ReconError {
    ReconError::InvalidInput(msg.into())
}
