//! Learned downscaling of panoramas for transmission and direct viewport
//! rendering from the compressed low-resolution image.

pub mod config;
pub mod downsampler;
pub mod error;
pub mod losses;
pub mod model;
pub mod pipeline;
pub mod train;
pub mod vr;

pub use config::{DescriptorMode, ModelConfig, QuantRelax, TrainConfig};
pub use error::{ModelError, Result};
pub use model::Model;
pub use train::Trainer;
pub use vr::Latent;
