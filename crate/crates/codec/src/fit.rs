//! Rate control: searching the quality scalar for a target bitrate.

use panoview_core::Image;

use crate::error::{CodecError, Result};
use crate::jpeg::{analyze, bpp_real, encode_analysis, Encoded};
use crate::tables::{QuantTables, MAX_QUALITY, MIN_QUALITY};

/// Relative bitrate tolerance of [`fit_quant_tables`].
pub const BPP_TOLERANCE: f64 = 0.05;
const MAX_STEPS: usize = 60;

#[derive(Debug, Clone)]
pub struct RateFit {
    pub tables: QuantTables,
    pub encoded: Encoded,
    pub bpp: f64,
    /// `(quality, bpp)` of every encode tried, in order.
    pub path: Vec<(f64, f64)>,
}

/// Bisects the quality of the scaled reference tables until the stream of
/// `lr` costs `target_bpp` within 5%, measured against the original
/// `hr_height × hr_width` pixel count.
pub fn fit_quant_tables(lr: &Image, hr_height: usize, hr_width: usize, target_bpp: f64) -> Result<RateFit> {
    if !(target_bpp > 0.0 && target_bpp.is_finite()) {
        return Err(CodecError::InvalidInput(format!("target bpp {target_bpp}")));
    }
    let an = analyze(lr);
    let mut path = Vec::new();
    let mut try_q = |q: f64| -> Result<(Encoded, f64)> {
        let e = encode_analysis(&an, &QuantTables::from_quality(q))?;
        let bpp = bpp_real(e.bytes.len(), hr_height, hr_width);
        path.push((q, bpp));
        Ok((e, bpp))
    };
    let within = |bpp: f64| (bpp - target_bpp).abs() <= BPP_TOLERANCE * target_bpp;
    let (lo_e, lo_bpp) = try_q(MIN_QUALITY)?;
    let (hi_e, hi_bpp) = try_q(MAX_QUALITY)?;
    let done = |e: Encoded, bpp: f64, path: Vec<(f64, f64)>| RateFit {
        tables: e.tables.clone(),
        encoded: e,
        bpp,
        path,
    };
    if within(lo_bpp) {
        return Ok(done(lo_e, lo_bpp, path));
    }
    if within(hi_bpp) {
        return Ok(done(hi_e, hi_bpp, path));
    }
    if target_bpp < lo_bpp || target_bpp > hi_bpp {
        return Err(CodecError::TargetUnreachable {
            target: target_bpp,
            lo: lo_bpp,
            hi: hi_bpp,
        });
    }
    let (mut lo, mut hi) = (MIN_QUALITY, MAX_QUALITY);
    let mut best: Option<(Encoded, f64)> = None;
    for _ in 0..MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        let (e, bpp) = try_q(mid)?;
        if within(bpp) {
            return Ok(done(e, bpp, path));
        }
        if bpp < target_bpp {
            lo = mid;
        } else {
            hi = mid;
        }
        if best.as_ref().is_none_or(|(_, b)| (bpp - target_bpp).abs() < (b - target_bpp).abs()) {
            best = Some((e, bpp));
        }
    }
    let (_, b) = best.expect("at least one bisection step");
    Err(CodecError::TargetUnreachable {
        target: target_bpp,
        lo: b.min(target_bpp),
        hi: b.max(target_bpp),
    })
}
