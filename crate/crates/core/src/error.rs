//! Error type shared by all pipeline stages.

use thiserror::Error;

/// Errors produced by segmentation, featurization, training and refinement.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (empty image, zero target, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two inputs that must agree in shape did not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A configuration value or combination is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// A file had the wrong structure or an unsupported version.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn dimension_mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
