//! Training losses, as plain functions and as graph expressions.

use panoview_core::Image;
use panoview_nn::{Graph, Tensor, Var};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub guide: f64,
    pub bpp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { guide: 0.6, bpp: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub pix: f64,
    pub guide: f64,
    pub bpp: f64,
}

/// Sum of absolute channel differences divided by the number of pixels.
pub fn loss_pix(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(ModelError::LengthMismatch(pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Squared error over all channels divided by `(p/s)²`.
pub fn loss_guide(pred: &Image, bicubic: &Image, p: usize, s: usize) -> Result<f64> {
    let side = p / s;
    for img in [pred, bicubic] {
        if img.height() != side || img.width() != side {
            return Err(ModelError::ShapeMismatch(format!(
                "guide expects {side}x{side}, got {}x{}",
                img.height(),
                img.width()
            )));
        }
    }
    let sum: f64 = pred.data().iter().zip(bicubic.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / (side * side) as f64)
}

/// Bits per HR pixel of a `p × p` patch.
pub fn loss_bpp(bits: f64, p: usize) -> f64 {
    bits / (p * p) as f64
}

pub fn loss_total(parts: LossParts, w: LossWeights) -> f64 {
    parts.pix + w.guide * parts.guide + w.bpp * parts.bpp
}

/// Graph form of [`loss_pix`] for predictions `[N, 3]`.
pub fn graph_loss_pix(g: &mut Graph, pred: Var, target: &[[f64; 3]]) -> Result<Var> {
    let n = g.shape(pred)[0];
    if n != target.len() {
        return Err(ModelError::LengthMismatch(n, target.len()));
    }
    let t = g.constant(Tensor::new(&[n, 3], target.iter().flatten().copied().collect())?);
    let d = g.sub(pred, t)?;
    let a = g.abs(d);
    let s = g.sum(a);
    Ok(g.scale(s, 1.0 / n.max(1) as f64))
}

/// Graph form of [`loss_guide`] for `pred [3, p/s, p/s]`.
pub fn graph_loss_guide(g: &mut Graph, pred: Var, bicubic: &Image, p: usize, s: usize) -> Result<Var> {
    let side = p / s;
    if g.shape(pred) != [3, side, side] || bicubic.height() != side || bicubic.width() != side {
        return Err(ModelError::ShapeMismatch(format!(
            "guide expects [3, {side}, {side}], got {:?} and {}x{}",
            g.shape(pred),
            bicubic.height(),
            bicubic.width()
        )));
    }
    let t = g.constant(Tensor::new(&[3, side, side], bicubic.data().to_vec())?);
    let d = g.sub(pred, t)?;
    let sq = g.square(d);
    let sum = g.sum(sq);
    Ok(g.scale(sum, 1.0 / (side * side) as f64))
}

/// Weighted sum of the three graph terms.
pub fn graph_loss_total(g: &mut Graph, pix: Var, guide: Var, bpp: Var, w: LossWeights) -> Result<Var> {
    let a = g.scale(guide, w.guide);
    let b = g.scale(bpp, w.bpp);
    let t = g.add(pix, a)?;
    Ok(g.add(t, b)?)
}
