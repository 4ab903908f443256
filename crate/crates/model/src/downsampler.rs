//! Learned downsampler: a fixed bicubic skip plus a small strided CNN.

use std::sync::Arc;

use panoview_core::resample::downscale_taps;
use panoview_nn::{layers, Bound, CustomOp, Graph, Padding, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::Result;

/// Antialiased bicubic downscale of a `[3, H, W]` tensor as a linear graph
/// op. Matches `bicubic_downscale` without the final clamp.
#[derive(Debug, Clone)]
pub struct BicubicDown {
    pub scale: usize,
    pub wrap: bool,
}

impl BicubicDown {
    fn taps(&self, h: usize, w: usize) -> (Vec<Vec<(usize, f64)>>, Vec<Vec<(usize, f64)>>) {
        (downscale_taps(h, self.scale, false), downscale_taps(w, self.scale, self.wrap))
    }
}

fn dims(t: &Tensor, scale: usize) -> panoview_nn::Result<(usize, usize, usize)> {
    let s = t.shape();
    if s.len() != 3 || scale == 0 || s[1] % scale != 0 || s[2] % scale != 0 {
        return Err(panoview_nn::NnError::ShapeMismatch {
            op: "bicubic_down",
            detail: format!("{s:?} by {scale}"),
        });
    }
    Ok((s[0], s[1], s[2]))
}

impl CustomOp for BicubicDown {
    fn name(&self) -> &'static str {
        "bicubic_down"
    }

    fn forward(&self, inputs: &[&Tensor]) -> panoview_nn::Result<Tensor> {
        let (c, h, w) = dims(inputs[0], self.scale)?;
        let (rows, cols) = self.taps(h, w);
        let (oh, ow) = (rows.len(), cols.len());
        let x = inputs[0].data();
        let mut out = vec![0.0; c * oh * ow];
        let mut tmp = vec![0.0; h * ow];
        for ch in 0..c {
            let plane = &x[ch * h * w..(ch + 1) * h * w];
            for y in 0..h {
                for (ox, taps) in cols.iter().enumerate() {
                    tmp[y * ow + ox] = taps.iter().map(|&(i, wt)| wt * plane[y * w + i]).sum();
                }
            }
            for (oy, taps) in rows.iter().enumerate() {
                for ox in 0..ow {
                    out[(ch * oh + oy) * ow + ox] = taps.iter().map(|&(i, wt)| wt * tmp[i * ow + ox]).sum();
                }
            }
        }
        Tensor::new(&[c, oh, ow], out)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (c, h, w) = (inputs[0].shape()[0], inputs[0].shape()[1], inputs[0].shape()[2]);
        let (rows, cols) = self.taps(h, w);
        let (oh, ow) = (rows.len(), cols.len());
        let gd = grad.data();
        let mut gx = vec![0.0; c * h * w];
        let mut tmp = vec![0.0; h * ow];
        for ch in 0..c {
            tmp.iter_mut().for_each(|v| *v = 0.0);
            for (oy, taps) in rows.iter().enumerate() {
                for ox in 0..ow {
                    let g = gd[(ch * oh + oy) * ow + ox];
                    for &(i, wt) in taps {
                        tmp[i * ow + ox] += wt * g;
                    }
                }
            }
            let plane = &mut gx[ch * h * w..(ch + 1) * h * w];
            for y in 0..h {
                for (ox, taps) in cols.iter().enumerate() {
                    let g = tmp[y * ow + ox];
                    for &(i, wt) in taps {
                        plane[y * w + i] += wt * g;
                    }
                }
            }
        }
        vec![Tensor::new(inputs[0].shape(), gx).unwrap()]
    }
}

/// Parameter names of the downsampler, in application order.
pub fn layer_names(cfg: &ModelConfig) -> Vec<String> {
    let mut v = vec!["down.in".to_string()];
    for i in 0..cfg.scale.trailing_zeros() {
        v.push(format!("down.{i}"));
    }
    v.push("down.out".to_string());
    v
}

/// `[3, H, W]` → `[3, H/s, W/s]`. `padding` is `Zero` on training patches
/// and `WrapWidth` on whole panoramas.
pub fn downsample(g: &mut Graph, p: &Bound, cfg: &ModelConfig, x: Var, padding: Padding) -> Result<Var> {
    let skip = g.custom(
        Arc::new(BicubicDown {
            scale: cfg.scale,
            wrap: padding == Padding::WrapWidth,
        }),
        &[x],
    )?;
    let mut h = layers::conv(g, p, "down.in", x, 1, padding)?;
    h = g.gelu(h);
    for i in 0..cfg.scale.trailing_zeros() {
        h = layers::conv(g, p, &format!("down.{i}"), h, 2, padding)?;
        h = g.gelu(h);
    }
    let r = layers::conv(g, p, "down.out", h, 1, padding)?;
    Ok(g.add(skip, r)?)
}
