use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("malformed stream: {0}")]
    MalformedStream(String),
    #[error("target {target:.4} bpp outside the reachable range [{lo:.4}, {hi:.4}]")]
    TargetUnreachable { target: f64, lo: f64, hi: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, CodecError>;

pub(crate) fn malformed(msg: impl Into<String>) -> CodecError {
    CodecError::MalformedStream(msg.into())
}
