//! Error types shared across the crate.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A sparse depth map with no observations was handed to the objective.
    #[error("sparse depth map has no observations")]
    NoObservations,
    /// A metric was evaluated over zero overlapping valid pixels.
    #[error("no overlapping valid pixels between prediction and ground truth")]
    NoPixels,
    /// A scene description leaves some camera ray without a surface.
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    /// A file does not conform to its declared on-disk format.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
