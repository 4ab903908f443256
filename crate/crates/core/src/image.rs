use crate::error::{Error, Result};

/// Planar RGB raster with samples nominally in `[0, 1]`.
///
/// Layout is channel-major (`3 × height × width`), each plane row-major,
/// which is also the layout of a `[3, H, W]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Alias used where a raster is interpreted as an equirectangular panorama.
pub type ErpImage = Image;

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize) -> Self {
        Self::filled(height, width, [0.0; 3])
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let plane = height * width;
        let mut data = Vec::with_capacity(3 * plane);
        for c in rgb {
            data.extend(std::iter::repeat_n(c, plane));
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_planar(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ShapeMismatch("empty image".into()));
        }
        if data.len() != 3 * height * width {
            return Err(Error::ShapeMismatch(format!(
                "expected {} samples for {height}x{width}, got {}",
                3 * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a per-pixel function of `(row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(height, width);
        for y in 0..height {
            for x in 0..width {
                img.set_pixel(y, x, f(y, x));
            }
        }
        img
    }

    /// Interleaved 8-bit RGB to planar floats.
    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 3 * height * width {
            return Err(Error::ShapeMismatch(format!(
                "expected {} bytes, got {}",
                3 * height * width,
                bytes.len()
            )));
        }
        Ok(Self::from_fn(height, width, |y, x| {
            let i = 3 * (y * width + x);
            [
                bytes[i] as f64 / 255.0,
                bytes[i + 1] as f64 / 255.0,
                bytes[i + 2] as f64 / 255.0,
            ]
        }))
    }

    /// Planar floats to interleaved 8-bit RGB, clamped and rounded.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 * self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in self.pixel(y, x) {
                    out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        [self.get(0, y, x), self.get(1, y, x), self.get(2, y, x)]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        for (c, v) in rgb.into_iter().enumerate() {
            self.set(c, y, x, v);
        }
    }

    /// Circularly shifts columns so that output column `x` holds input
    /// column `(x + k) mod W`.
    pub fn roll_columns(&self, k: usize) -> Self {
        let k = k % self.width;
        Self::from_fn(self.height, self.width, |y, x| self.pixel(y, (x + k) % self.width))
    }

    pub fn clamp01(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb8_roundtrip() {
        let bytes: Vec<u8> = (0..4 * 5 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let img = Image::from_rgb8(4, 5, &bytes).unwrap();
        assert_eq!(img.to_rgb8(), bytes);
    }

    #[test]
    fn roll_moves_columns() {
        let img = Image::from_fn(2, 4, |y, x| [x as f64, y as f64, 0.0]);
        let r = img.roll_columns(1);
        assert_eq!(r.get(0, 0, 0), 1.0);
        assert_eq!(r.get(0, 1, 3), 0.0);
        assert_eq!(img.roll_columns(4), img);
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(Image::from_planar(2, 2, vec![0.0; 11]).is_err());
        assert!(Image::from_planar(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
    }
}
