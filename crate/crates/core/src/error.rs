use thiserror::Error;

/// Errors raised by the tomography toolkit.
#[derive(Debug, Error)]
pub enum QstError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("unphysical state: {0}")]
    Unphysical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("informationally incomplete data, unmeasured directions: {0:?}")]
    InformationallyIncomplete(Vec<String>),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("likelihood singularity: {0}")]
    LikelihoodSingular(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl QstError {
    /// Whether this error comes from configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, QstError::InvalidArgument(_) | QstError::Serde(_))
    }
}

pub type Result<T> = std::result::Result<T, QstError>;
