use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ray lies behind the viewport plane")]
    BehindViewport,
    #[error("invalid viewport: {0}")]
    InvalidViewport(String),
    #[error("image of {height}x{width} is not divisible by scale {scale}")]
    IndivisibleShape {
        height: usize,
        width: usize,
        scale: usize,
    },
    #[error("patch rows {top}..{bottom} exceed image height {height}")]
    VerticalOutOfBounds {
        top: usize,
        bottom: usize,
        height: usize,
    },
    #[error("coordinate ({x1}, {x2}) lies outside the patch")]
    OutOfPatch { x1: f64, x2: f64 },
    #[error("viewport does not overlap the patch")]
    EmptyOverlap,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
