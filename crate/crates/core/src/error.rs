use std::path::PathBuf;

/// Errors produced by the transform, tree construction and imaging layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown wavelet family `{0}`")]
    UnknownFilter(String),

    #[error("signal of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("point count {0} is odd; pairing needs an even count")]
    Parity(usize),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("plan mismatch: {0}")]
    PlanMismatch(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed plan file: {0}")]
    PlanFormat(String),

    #[error("unsupported image {path}: {reason}")]
    ImageFormat { path: PathBuf, reason: String },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
