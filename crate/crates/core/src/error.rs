use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("Bloch vector lies outside the unit ball (norm {0})")]
    BlochOutsideBall(f64),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("channel is not trace preserving (deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("map is not completely positive: {0}")]
    NotCompletelyPositive(String),

    #[error("transfer matrix is not diagonal in the Pauli basis (max off-diagonal {0:e})")]
    NonDiagonalTransfer(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension {0} exceeds the supported ceiling of {1}")]
    DimensionOverflow(usize, usize),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
