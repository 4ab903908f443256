//! Image and checkpoint files.

use std::path::Path;

use anyhow::{anyhow, Context};
use panoview_core::Image;
use panoview_model::Model;
use panoview_nn::Checkpoint;

use crate::{usage, Failure};

/// Fails with a usage error when `path` does not exist.
pub fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(anyhow!("no such file: {}", path.display())))
    }
}

/// PNG, PPM or JPEG as an RGB image in `[0, 1]`. JPEG files go through the
/// crate's own decoder.
pub fn read_image(path: &Path) -> Result<Image, Failure> {
    require_file(path)?;
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(&[0xFF, 0xD8]) {
        return Ok(panoview_codec::decode(&bytes).with_context(|| format!("decoding {}", path.display()))?);
    }
    let rgb = image::load_from_memory(&bytes)
        .with_context(|| format!("decoding {}", path.display()))?
        .to_rgb8();
    Ok(Image::from_rgb8(rgb.height() as usize, rgb.width() as usize, rgb.as_raw())
        .map_err(anyhow::Error::from)?)
}

/// Writes an 8-bit RGB file; the format follows the extension.
pub fn write_image(path: &Path, img: &Image) -> anyhow::Result<()> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .ok_or_else(|| anyhow!("image buffer size"))?;
    buf.save(path).with_context(|| format!("writing {}", path.display()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    require_file(path)?;
    Ok(Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?)
}

pub fn load_model(path: &Path) -> Result<Model, Failure> {
    let ck = load_checkpoint(path)?;
    Ok(Model::from_checkpoint(&ck).map_err(|e| usage(anyhow!("{}: {e}", path.display())))?)
}
