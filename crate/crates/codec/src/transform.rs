//! Color conversion, level shift and the 8×8 block DCT.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Zigzag scan: `ZIGZAG[k]` is the natural (row-major) index of the k-th
/// coefficient in scan order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;

/// Linear part of full-range JFIF RGB → YCbCr (chroma offsets excluded).
pub const RGB_TO_YCC: [[f64; 3]; 3] = [
    [KR, KG, KB],
    [-KR / (2.0 * (1.0 - KB)), -KG / (2.0 * (1.0 - KB)), 0.5],
    [0.5, -KG / (2.0 * (1.0 - KR)), -KB / (2.0 * (1.0 - KR))],
];

/// Inverse of [`RGB_TO_YCC`].
pub const YCC_TO_RGB: [[f64; 3]; 3] = [
    [1.0, 0.0, 2.0 * (1.0 - KR)],
    [1.0, -KB * 2.0 * (1.0 - KB) / KG, -KR * 2.0 * (1.0 - KR) / KG],
    [1.0, 2.0 * (1.0 - KB), 0.0],
];

fn apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

/// Full-range JFIF RGB → YCbCr on the `[0, 255]` scale.
pub fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> [f64; 3] {
    let [y, cb, cr] = apply(&RGB_TO_YCC, [r, g, b]);
    [y, cb + 128.0, cr + 128.0]
}

pub fn ycbcr_to_rgb(y: f64, cb: f64, cr: f64) -> [f64; 3] {
    apply(&YCC_TO_RGB, [y, cb - 128.0, cr - 128.0])
}

/// Orthonormal DCT-II basis, `m[u][x] = c(u)/2 · cos((2x+1)uπ/16)`.
fn basis() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let c = if u == 0 { 0.5f64.sqrt() } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5 * c * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        m
    })
}

/// Forward 2D DCT of a row-major block; output in natural order.
pub fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let m = basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| m[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| m[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

/// Inverse of [`fdct`] (its transpose).
pub fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let m = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| m[u][x] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| m[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

pub fn to_zigzag(natural: &[f64; 64]) -> [f64; 64] {
    std::array::from_fn(|k| natural[ZIGZAG[k]])
}

pub fn from_zigzag(zz: &[f64; 64]) -> [f64; 64] {
    let mut out = [0.0; 64];
    for (k, &v) in zz.iter().enumerate() {
        out[ZIGZAG[k]] = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The DCT straight from its double-sum definition.
    fn dct_definition(block: &[f64; 64]) -> [f64; 64] {
        let c = |k: usize| if k == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
        std::array::from_fn(|i| {
            let (v, u) = (i / 8, i % 8);
            let mut s = 0.0;
            for y in 0..8 {
                for x in 0..8 {
                    s += block[y * 8 + x]
                        * (((2 * x + 1) * u) as f64 * PI / 16.0).cos()
                        * (((2 * y + 1) * v) as f64 * PI / 16.0).cos();
                }
            }
            0.25 * c(u) * c(v) * s
        })
    }

    #[test]
    fn dct_matches_definition_and_inverts() {
        let block: [f64; 64] = std::array::from_fn(|i| ((i * 53 % 17) as f64 - 8.0) * 7.5);
        let f = fdct(&block);
        let d = dct_definition(&block);
        for i in 0..64 {
            assert!((f[i] - d[i]).abs() < 1e-9);
        }
        let back = idct(&f);
        for i in 0..64 {
            assert!((back[i] - block[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_block_has_only_dc() {
        let f = fdct(&[10.0; 64]);
        assert!((f[0] - 80.0).abs() < 1e-12);
        assert!(f[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn color_transform_inverts_and_maps_gray() {
        let [y, cb, cr] = rgb_to_ycbcr(200.0, 30.0, 90.0);
        let [r, g, b] = ycbcr_to_rgb(y, cb, cr);
        assert!((r - 200.0).abs() < 1e-12 && (g - 30.0).abs() < 1e-12 && (b - 90.0).abs() < 1e-12);
        let gray = rgb_to_ycbcr(77.0, 77.0, 77.0);
        assert!((gray[0] - 77.0).abs() < 1e-12 && (gray[1] - 128.0).abs() < 1e-12 && (gray[2] - 128.0).abs() < 1e-12);
    }

    #[test]
    fn zigzag_is_a_permutation() {
        let mut seen = [false; 64];
        for &i in &ZIGZAG {
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
        let x: [f64; 64] = std::array::from_fn(|i| i as f64);
        assert_eq!(from_zigzag(&to_zigzag(&x)), x);
    }
}
