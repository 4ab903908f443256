//! Interpolation kernels, point sampling, antialiased downscaling and the
//! classical interpolation-based viewport renderer.
//!
//! Edge policy for panoramas: longitude wraps, latitude clamps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{inverse_map, ErpCoord, ViewportCoord, ViewportSpec};
use crate::image::Image;

/// Keys cubic convolution parameter.
pub const KEYS_A: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Nearest,
    Bilinear,
    Bicubic,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Nearest => "nearest",
            Kernel::Bilinear => "bilinear",
            Kernel::Bicubic => "bicubic",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Kernel::Nearest),
            "bilinear" => Ok(Kernel::Bilinear),
            "bicubic" => Ok(Kernel::Bicubic),
            other => Err(Error::InvalidArgument(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
#[inline]
pub fn keys_cubic(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Four bicubic tap weights for a fractional offset `t ∈ [0, 1)`, for taps
/// at offsets `-1, 0, 1, 2`.
#[inline]
pub fn cubic_weights(t: f64) -> [f64; 4] {
    [
        keys_cubic(t + 1.0),
        keys_cubic(t),
        keys_cubic(1.0 - t),
        keys_cubic(2.0 - t),
    ]
}

/// One tap of a bilinear footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
    /// Position of the tap's pixel center in the same (unwrapped) frame as
    /// the query, after latitude clamping.
    pub center_x: f64,
    pub center_y: f64,
}

/// Bilinear footprint of `(x, y)` on an `height × width` grid whose pixel
/// centers sit on integers. Rows clamp; columns wrap when `wrap` is set and
/// clamp otherwise. Taps are ordered (top-left, top-right, bottom-left,
/// bottom-right) and their weights sum to one.
pub fn bilinear_taps(height: usize, width: usize, x: f64, y: f64, wrap: bool) -> [Tap; 4] {
    let yc = y.clamp(0.0, (height - 1) as f64);
    let xc = if wrap { x } else { x.clamp(0.0, (width - 1) as f64) };
    let y0f = yc.floor();
    let x0f = xc.floor();
    let ty = yc - y0f;
    let tx = xc - x0f;
    let y0 = y0f as usize;
    let y1 = (y0 + 1).min(height - 1);
    let (c0, c1) = if wrap {
        let c0 = (x0f as i64).rem_euclid(width as i64) as usize;
        (c0, (c0 + 1) % width)
    } else {
        let c0 = x0f as usize;
        (c0, (c0 + 1).min(width - 1))
    };
    let (cy0, cy1) = (y0f, y0f + 1.0);
    let (cx0, cx1) = (x0f, x0f + 1.0);
    [
        Tap { row: y0, col: c0, weight: (1.0 - ty) * (1.0 - tx), center_x: cx0, center_y: cy0 },
        Tap { row: y0, col: c1, weight: (1.0 - ty) * tx, center_x: cx1, center_y: cy0 },
        Tap { row: y1, col: c0, weight: ty * (1.0 - tx), center_x: cx0, center_y: cy1 },
        Tap { row: y1, col: c1, weight: ty * tx, center_x: cx1, center_y: cy1 },
    ]
}

#[inline]
fn wrap_or_clamp(i: i64, n: usize, wrap: bool) -> usize {
    if wrap {
        i.rem_euclid(n as i64) as usize
    } else {
        i.clamp(0, n as i64 - 1) as usize
    }
}

/// Samples `img` at a continuous ERP position. `x2` is clamped to
/// `[0, H-1]`; `x1` wraps modulo `W` when `wrap_longitude` is set and
/// clamps otherwise.
pub fn sample_at(img: &Image, c: ErpCoord, kernel: Kernel, wrap_longitude: bool) -> [f64; 3] {
    let (h, w) = (img.height(), img.width());
    match kernel {
        Kernel::Nearest => {
            let y = c.x2.clamp(0.0, (h - 1) as f64).round() as usize;
            let x = wrap_or_clamp(c.x1.round() as i64, w, wrap_longitude);
            img.pixel(y, x)
        }
        Kernel::Bilinear => {
            let taps = bilinear_taps(h, w, c.x1, c.x2, wrap_longitude);
            let mut out = [0.0; 3];
            for tap in &taps {
                for (ch, o) in out.iter_mut().enumerate() {
                    *o += tap.weight * img.get(ch, tap.row, tap.col);
                }
            }
            out
        }
        Kernel::Bicubic => {
            let yc = c.x2.clamp(0.0, (h - 1) as f64);
            let xc = if wrap_longitude { c.x1 } else { c.x1.clamp(0.0, (w - 1) as f64) };
            let (y0, x0) = (yc.floor(), xc.floor());
            let wy = cubic_weights(yc - y0);
            let wx = cubic_weights(xc - x0);
            let mut out = [0.0; 3];
            for (j, wyj) in wy.iter().enumerate() {
                let row = wrap_or_clamp(y0 as i64 - 1 + j as i64, h, false);
                for (i, wxi) in wx.iter().enumerate() {
                    let col = wrap_or_clamp(x0 as i64 - 1 + i as i64, w, wrap_longitude);
                    let wgt = wyj * wxi;
                    for (ch, o) in out.iter_mut().enumerate() {
                        *o += wgt * img.get(ch, row, col);
                    }
                }
            }
            out
        }
    }
}

/// Normalized `(input index, weight)` taps of the Keys kernel stretched by
/// `scale`, for every output index of a 1D downscale.
pub fn downscale_taps(n_in: usize, scale: usize, wrap: bool) -> Vec<Vec<(usize, f64)>> {
    let s = scale as f64;
    let n_out = n_in / scale;
    (0..n_out)
        .map(|k| {
            let center = s * k as f64 + (s - 1.0) / 2.0;
            let lo = (center - 2.0 * s).ceil() as i64;
            let hi = (center + 2.0 * s).floor() as i64;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .filter_map(|i| {
                    let wgt = keys_cubic((i as f64 - center) / s);
                    (wgt != 0.0).then(|| (wrap_or_clamp(i, n_in, wrap), wgt))
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

fn downscale_impl(img: &Image, scale: usize, wrap_longitude: bool) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    if scale == 0 || h % scale != 0 || w % scale != 0 {
        return Err(Error::IndivisibleShape {
            height: h,
            width: w,
            scale,
        });
    }
    if scale == 1 {
        return Ok(img.clone());
    }
    let (oh, ow) = (h / scale, w / scale);
    let col_taps = downscale_taps(w, scale, wrap_longitude);
    let row_taps = downscale_taps(h, scale, false);
    let mut out = Image::new(oh, ow);
    let mut tmp = vec![0.0; h * ow];
    for ch in 0..3 {
        let plane = img.plane(ch);
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (x, taps) in col_taps.iter().enumerate() {
                tmp[y * ow + x] = taps.iter().map(|&(i, wgt)| wgt * row[i]).sum();
            }
        }
        for (y, taps) in row_taps.iter().enumerate() {
            for x in 0..ow {
                let v: f64 = taps.iter().map(|&(i, wgt)| wgt * tmp[i * ow + x]).sum();
                out.set(ch, y, x, v.clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

/// Antialiased bicubic downscale by an integer factor (Keys kernel stretched
/// by `scale`, weights renormalized, edges clamped). Output is clamped to
/// `[0, 1]`.
pub fn bicubic_downscale(img: &Image, scale: usize) -> Result<Image> {
    downscale_impl(img, scale, false)
}

/// [`bicubic_downscale`] for a full panorama: columns wrap around the seam.
pub fn bicubic_downscale_erp(img: &Image, scale: usize) -> Result<Image> {
    downscale_impl(img, scale, true)
}

/// `p × p` patch with top-left corner `(a, b)`. Columns wrap modulo `W`;
/// rows must fit.
pub fn crop_patch(img: &Image, a: usize, b: usize, p: usize) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    if p == 0 || b + p > h {
        return Err(Error::VerticalOutOfBounds {
            top: b,
            bottom: b + p,
            height: h,
        });
    }
    Ok(Image::from_fn(p, p, |y, x| img.pixel(b + y, (a + x) % w)))
}

/// Classical viewport rendering: every viewport pixel center is mapped to
/// the panorama and interpolated with `kernel`.
pub fn render_viewport_baseline(img: &Image, spec: &ViewportSpec, kernel: Kernel) -> Image {
    let (h, w) = (img.height(), img.width());
    let (vh, vw) = (spec.height, spec.width);
    let rows: Vec<Vec<[f64; 3]>> = (0..vh)
        .into_par_iter()
        .map(|v| {
            (0..vw)
                .map(|u| {
                    let x = inverse_map(spec, ViewportCoord::new(u as f64, v as f64), h, w);
                    sample_at(img, x, kernel, true)
                })
                .collect()
        })
        .collect();
    let mut out = Image::new(vh, vw);
    for (v, row) in rows.into_iter().enumerate() {
        for (u, px) in row.into_iter().enumerate() {
            out.set_pixel(v, u, px);
        }
    }
    out
}
