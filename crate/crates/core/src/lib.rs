//! Panorama geometry and image processing primitives.
//!
//! Equirectangular (ERP) panoramas, the gnomonic viewport mapping, kernel
//! resampling, the discrete pixel sampler used to build viewport
//! supervision inside ERP training patches, spherical pixel-shape
//! descriptors, and image quality metrics.

pub mod error;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod oracle;
pub mod resample;
pub mod sampling;
pub mod ssr;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{ErpCoord, SphericalCoord, ViewportCoord, ViewportSpec};
pub use image::Image;
