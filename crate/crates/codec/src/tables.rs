//! Quantization tables and their quality scaling.

use crate::transform::ZIGZAG;

/// Reference luminance table, natural order.
pub const BASE_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113,
    92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99,
];

/// Reference chrominance table, natural order.
pub const BASE_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
];

pub const MIN_QUALITY: f64 = 1.0;
pub const MAX_QUALITY: f64 = 100.0;

/// Luma and chroma tables, both in zigzag order with entries in `[1, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTables {
    pub luma: [u16; 64],
    pub chroma: [u16; 64],
    /// Quality the tables were derived from, if any.
    pub quality: Option<f64>,
}

fn scale_table(base: &[u16; 64], scale: f64) -> [u16; 64] {
    std::array::from_fn(|k| {
        let v = ((base[ZIGZAG[k]] as f64 * scale + 50.0) / 100.0).floor();
        v.clamp(1.0, 255.0) as u16
    })
}

impl QuantTables {
    /// Reference tables scaled by the usual quality rule, extended to a
    /// continuous quality in `[1, 100]`.
    pub fn from_quality(quality: f64) -> Self {
        let q = quality.clamp(MIN_QUALITY, MAX_QUALITY);
        let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
        Self {
            luma: scale_table(&BASE_LUMA, scale),
            chroma: scale_table(&BASE_CHROMA, scale),
            quality: Some(q),
        }
    }

    /// All-ones tables: rounding of the DCT coefficients is the only loss.
    pub fn unit() -> Self {
        Self {
            luma: [1; 64],
            chroma: [1; 64],
            quality: None,
        }
    }

    pub fn for_channel(&self, c: usize) -> &[u16; 64] {
        if c == 0 {
            &self.luma
        } else {
            &self.chroma
        }
    }

    pub fn max_entry(&self) -> u16 {
        self.luma.iter().chain(&self.chroma).copied().max().unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_fifty_is_the_reference() {
        let t = QuantTables::from_quality(50.0);
        assert_eq!(t.luma[0], 16);
        assert_eq!(t.luma[1], 11);
        assert_eq!(t.luma[2], 12);
        assert_eq!(t.chroma[63], 99);
    }

    #[test]
    fn quality_extremes() {
        assert_eq!(QuantTables::from_quality(100.0).luma, [1; 64]);
        assert!(QuantTables::from_quality(1.0).luma.iter().all(|&v| v == 255 || v >= 200));
        let lo = QuantTables::from_quality(20.0);
        let hi = QuantTables::from_quality(80.0);
        assert!(lo.luma.iter().zip(&hi.luma).all(|(a, b)| a >= b));
    }
}
