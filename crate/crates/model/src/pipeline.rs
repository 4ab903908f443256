//! Inference pipeline and the view-direction evaluation protocol.

use std::fmt::Write as _;

use panoview_codec::jpeg::{bpp_real, decode, encode};
use panoview_codec::QuantTables;
use panoview_core::geometry::ViewportSpec;
use panoview_core::metrics::{psnr, ssim};
use panoview_core::resample::{bicubic_downscale_erp, render_viewport_baseline, Kernel};
use panoview_core::Image;

use crate::error::Result;
use crate::model::Model;

/// Evaluation directions `(θ, φ)` in degrees: the equator every 90°,
/// both ±45° bands, the seam and both poles.
pub const EVAL_DIRECTIONS_DEG: [(f64, f64); 10] = [
    (0.0, 0.0),
    (0.0, 90.0),
    (0.0, 180.0),
    (0.0, -90.0),
    (45.0, 0.0),
    (45.0, 120.0),
    (-45.0, 60.0),
    (-45.0, -120.0),
    (90.0, 0.0),
    (-90.0, 0.0),
];

/// A compressed LR panorama as received by the client.
#[derive(Debug, Clone)]
pub struct Transmitted {
    /// Decoded LR image.
    pub lr: Image,
    pub bytes: Vec<u8>,
    /// Bits per HR pixel.
    pub bpp: f64,
}

fn transmit(lr: &Image, hr: &Image, tables: &QuantTables) -> Result<Transmitted> {
    let enc = encode(lr, tables)?;
    Ok(Transmitted {
        lr: decode(&enc.bytes)?,
        bpp: bpp_real(enc.bytes.len(), hr.height(), hr.width()),
        bytes: enc.bytes,
    })
}

/// Learned downscale followed by JPEG coding with `tables`.
pub fn transmit_learned(model: &Model, hr: &Image, tables: &QuantTables) -> Result<Transmitted> {
    transmit(&model.downscale(hr)?, hr, tables)
}

/// Bicubic downscale followed by JPEG coding with `tables`.
pub fn transmit_bicubic(hr: &Image, scale: usize, tables: &QuantTables) -> Result<Transmitted> {
    transmit(&bicubic_downscale_erp(hr, scale)?, hr, tables)
}

/// Viewport size and fields of view used for every direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSettings {
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub height: usize,
    pub width: usize,
}

impl Default for ViewSettings {
    fn default() -> Self {
        Self {
            fov_h_deg: 90.0,
            fov_v_deg: 90.0,
            height: 128,
            width: 128,
        }
    }
}

impl ViewSettings {
    pub fn spec(&self, theta_deg: f64, phi_deg: f64) -> Result<ViewportSpec> {
        Ok(ViewportSpec::from_degrees(
            theta_deg,
            phi_deg,
            self.fov_h_deg,
            self.fov_v_deg,
            self.height,
            self.width,
        )?)
    }
}

/// Scores of one rendered view against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub image: usize,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub baseline_psnr: f64,
    pub baseline_ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// `(learned, baseline)` bpp per image.
    pub bpp: Vec<(f64, f64)>,
}

impl EvalReport {
    /// Means of (psnr, ssim, baseline psnr, baseline ssim) over all rows.
    pub fn mean(&self) -> [f64; 4] {
        let n = self.rows.len().max(1) as f64;
        let mut m = [0.0; 4];
        for r in &self.rows {
            for (acc, v) in m.iter_mut().zip([r.psnr, r.ssim, r.baseline_psnr, r.baseline_ssim]) {
                *acc += v / n;
            }
        }
        m
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("image,theta_deg,phi_deg,psnr,ssim,baseline_psnr,baseline_ssim,bpp,baseline_bpp\n");
        for r in &self.rows {
            let (b, bb) = self.bpp[r.image];
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{:.5},{:.4},{:.5},{:.4},{:.4}",
                r.image, r.theta_deg, r.phi_deg, r.psnr, r.ssim, r.baseline_psnr, r.baseline_ssim, b, bb
            );
        }
        s
    }
}

/// Ground-truth view: bicubic sampling of the HR panorama.
pub fn ground_truth(hr: &Image, spec: &ViewportSpec) -> Image {
    render_viewport_baseline(hr, spec, Kernel::Bicubic)
}

/// Renders every direction of every image through the learned pipeline and
/// through bicubic downscaling + the same tables + bilinear viewport
/// sampling, scoring both against [`ground_truth`].
pub fn evaluate(
    model: &Model,
    images: &[Image],
    directions_deg: &[(f64, f64)],
    view: ViewSettings,
    tables: &QuantTables,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    let mut bpp = Vec::new();
    for (i, hr) in images.iter().enumerate() {
        let learned = transmit_learned(model, hr, tables)?;
        let base = transmit_bicubic(hr, model.cfg.scale, tables)?;
        bpp.push((learned.bpp, base.bpp));
        let lat = model.encode_image(&learned.lr)?;
        for &(t, ph) in directions_deg {
            let spec = view.spec(t, ph)?;
            let gt = ground_truth(hr, &spec);
            let out = model.render_viewport(&lat, &spec)?;
            let bl = render_viewport_baseline(&base.lr, &spec, Kernel::Bilinear);
            rows.push(EvalRow {
                image: i,
                theta_deg: t,
                phi_deg: ph,
                psnr: psnr(&out, &gt)?,
                ssim: ssim(&out, &gt)?,
                baseline_psnr: psnr(&bl, &gt)?,
                baseline_ssim: ssim(&bl, &gt)?,
            });
        }
    }
    Ok(EvalReport { rows, bpp })
}
