//! Full-reference quality metrics on `[0, 1]` images.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::Image;

/// Reported PSNR for identical inputs (and the upper bound of any PSNR).
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_shape(a: &Image, b: &Image) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )))
    }
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_shape(a, b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(1 / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

fn gaussian_window(n: usize) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..n)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode Gaussian filter of one plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = win.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|k| win[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|k| win[k] * tmp[(y + k) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM over all valid 11×11 Gaussian windows (σ = 1.5) and channels,
/// with `K1 = 0.01`, `K2 = 0.03` and unit dynamic range. Images smaller than
/// the window use a window shrunk to the smaller side.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shape(a, b)?;
    let (h, w) = (a.height(), a.width());
    let win = gaussian_window(SSIM_WINDOW.min(h).min(w));
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let x = a.plane(ch);
        let y = b.plane(ch);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let (mx, _, _) = filter_valid(x, h, w, &win);
        let (my, _, _) = filter_valid(y, h, w, &win);
        let (sxx, _, _) = filter_valid(&xx, h, w, &win);
        let (syy, _, _) = filter_valid(&yy, h, w, &win);
        let (sxy, _, _) = filter_valid(&xy, h, w, &win);
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Per-row weights `cos(π (x2 + 0.5 - H/2) / H)` of an ERP raster.
pub fn ws_weights(height: usize) -> Vec<f64> {
    let h = height as f64;
    (0..height)
        .map(|y| (PI * (y as f64 + 0.5 - h / 2.0) / h).cos())
        .collect()
}

/// PSNR with the squared error of every row weighted by the cosine of its
/// latitude.
pub fn ws_psnr(a: &Image, b: &Image) -> Result<f64> {
    check_shape(a, b)?;
    let (h, w) = (a.height(), a.width());
    let weights = ws_weights(h);
    let mut num = 0.0;
    let mut den = 0.0;
    for ch in 0..3 {
        let (pa, pb) = (a.plane(ch), b.plane(ch));
        for (y, wy) in weights.iter().enumerate() {
            let row: f64 = (0..w)
                .map(|x| {
                    let d = pa[y * w + x] - pb[y * w + x];
                    d * d
                })
                .sum();
            num += wy * row;
            den += wy * w as f64;
        }
    }
    Ok(psnr_from_mse(num / den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Viewport,
    Erp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    /// Only computed for ERP images.
    pub ws_psnr: Option<f64>,
}

pub fn metric_suite(pred: &Image, gt: &Image, kind: MetricKind) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(pred, gt)?,
        ssim: ssim(pred, gt)?,
        ws_psnr: match kind {
            MetricKind::Erp => Some(ws_psnr(pred, gt)?),
            MetricKind::Viewport => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use approx::assert_abs_diff_eq;

    /// Direct per-window SSIM, one window at a time.
    fn ssim_reference(a: &Image, b: &Image) -> f64 {
        let n = 11;
        let g = gaussian_window(n);
        let (h, w) = (a.height(), a.width());
        let mut total = 0.0;
        let mut count = 0;
        for ch in 0..3 {
            for y0 in 0..=h - n {
                for x0 in 0..=w - n {
                    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for j in 0..n {
                        for i in 0..n {
                            let wt = g[j] * g[i];
                            let p = a.get(ch, y0 + j, x0 + i);
                            let q = b.get(ch, y0 + j, x0 + i);
                            mx += wt * p;
                            my += wt * q;
                            sxx += wt * p * p;
                            syy += wt * q * q;
                            sxy += wt * p * q;
                        }
                    }
                    let (vx, vy, cv) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                    let (c1, c2) = (1e-4, 9e-4);
                    total += ((2.0 * mx * my + c1) * (2.0 * cv + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn identical_images_hit_the_cap() {
        let a = synth::panorama(16, 32, 1);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        assert_eq!(ws_psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        assert_abs_diff_eq!(ssim(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_error_of_one_level() {
        let a = Image::filled(8, 8, [0.5; 3]);
        let b = Image::filled(8, 8, [0.5 + 1.0 / 255.0; 3]);
        let p = psnr(&a, &b).unwrap();
        assert_abs_diff_eq!(p, 20.0 * 255f64.log10(), epsilon = 1e-9);
        assert_abs_diff_eq!(p, 48.13, epsilon = 0.01);
        assert_abs_diff_eq!(ws_psnr(&a, &b).unwrap(), p, epsilon = 1e-9);
    }

    #[test]
    fn two_pixel_fixture() {
        let a = Image::from_planar(1, 2, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Image::from_planar(1, 2, vec![0.1, 0.0, 0.0, 0.0, 0.0, 0.3]).unwrap();
        // MSE = (0.01 + 0.09) / 6
        let want = 10.0 * (6.0 / 0.1f64).log10();
        assert_abs_diff_eq!(psnr(&a, &b).unwrap(), want, epsilon = 1e-12);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn anticorrelated_binary_ssim_is_not_positive() {
        let a = Image::from_fn(16, 16, |y, x| [((x + y) % 2) as f64; 3]);
        let b = Image::from_fn(16, 16, |y, x| [1.0 - ((x + y) % 2) as f64; 3]);
        assert!(ssim(&a, &b).unwrap() <= 0.0);
    }

    #[test]
    fn ssim_matches_windowed_reference() {
        let a = synth::panorama(24, 30, 2);
        let b = synth::noise_image(24, 30, 3);
        let mix = Image::from_planar(
            24,
            30,
            a.data().iter().zip(b.data()).map(|(p, q)| 0.8 * p + 0.2 * q).collect(),
        )
        .unwrap();
        assert_abs_diff_eq!(ssim(&a, &mix).unwrap(), ssim_reference(&a, &mix), epsilon = 1e-10);
    }

    #[test]
    fn pole_errors_weigh_less() {
        let gt = Image::filled(32, 64, [0.5; 3]);
        let mut pole = gt.clone();
        let mut equator = gt.clone();
        for x in 0..64 {
            for c in 0..3 {
                pole.set(c, 0, x, 0.6);
                equator.set(c, 16, x, 0.6);
            }
        }
        assert!(ws_psnr(&pole, &gt).unwrap() > ws_psnr(&equator, &gt).unwrap());
        assert_abs_diff_eq!(psnr(&pole, &gt).unwrap(), psnr(&equator, &gt).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Image::new(4, 4);
        let b = Image::new(4, 5);
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
        assert!(ws_psnr(&a, &b).is_err());
    }

    #[test]
    fn suite_bundles_metrics() {
        let a = synth::panorama(16, 32, 4);
        let r = metric_suite(&a, &a, MetricKind::Erp).unwrap();
        assert_eq!(r.psnr, PSNR_CAP_DB);
        assert_eq!(r.ws_psnr, Some(PSNR_CAP_DB));
        let r = metric_suite(&a, &a, MetricKind::Viewport).unwrap();
        assert_eq!(r.ws_psnr, None);
    }
}
