use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Core(#[from] panoview_core::Error),
    #[error(transparent)]
    Nn(#[from] panoview_nn::NnError),
    #[error(transparent)]
    Codec(#[from] panoview_codec::CodecError),
    #[error("config: {0}")]
    Config(String),
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
