//! The compression path as differentiable graph operations.
//!
//! Images are `[3, h, w]` RGB tensors in `[0, 1]` with `h` and `w` multiples
//! of 8; coefficient tensors are `[3, blocks, 64]` in zigzag order, divided
//! by the quantization step.

use std::sync::Arc;

use panoview_nn::{CustomOp, Graph, NnError, Tensor, Var};

use crate::rate::{laplace_mass, laplace_mass_grad, PROB_FLOOR};
use crate::tables::QuantTables;
use crate::transform::{fdct, from_zigzag, idct, to_zigzag, RGB_TO_YCC, YCC_TO_RGB};

fn shape_err(op: &'static str, detail: String) -> NnError {
    NnError::ShapeMismatch { op, detail }
}

fn image_dims(op: &'static str, t: &Tensor) -> panoview_nn::Result<(usize, usize)> {
    let s = t.shape();
    if s.len() != 3 || s[0] != 3 || s[1] % 8 != 0 || s[2] % 8 != 0 || s[1] == 0 || s[2] == 0 {
        return Err(shape_err(op, format!("need [3, 8m, 8n] image, got {s:?}")));
    }
    Ok((s[1], s[2]))
}

fn mix(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn mix_t(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[0][i] * v[0] + m[1][i] * v[1] + m[2][i] * v[2])
}

/// Applies `f` to every 8×8 block of the three planes of `[3, h, w]` data and
/// writes block results to `[3, blocks, 64]`.
fn blockwise(data: &[f64], h: usize, w: usize, f: impl Fn(usize, [f64; 64]) -> [f64; 64]) -> Vec<f64> {
    let (bh, bw) = (h / 8, w / 8);
    let nb = bh * bw;
    let mut out = vec![0.0; 3 * nb * 64];
    for c in 0..3 {
        for b in 0..nb {
            let (by, bx) = (b / bw, b % bw);
            let blk = std::array::from_fn(|i| data[(c * h + by * 8 + i / 8) * w + bx * 8 + i % 8]);
            out[(c * nb + b) * 64..(c * nb + b + 1) * 64].copy_from_slice(&f(c, blk));
        }
    }
    out
}

/// Inverse layout of [`blockwise`].
fn unblock(coefs: &[f64], h: usize, w: usize, f: impl Fn(usize, [f64; 64]) -> [f64; 64]) -> Vec<f64> {
    let (bh, bw) = (h / 8, w / 8);
    let nb = bh * bw;
    let mut out = vec![0.0; 3 * h * w];
    for c in 0..3 {
        for b in 0..nb {
            let (by, bx) = (b / bw, b % bw);
            let blk: [f64; 64] = coefs[(c * nb + b) * 64..(c * nb + b + 1) * 64].try_into().unwrap();
            let px = f(c, blk);
            for i in 0..64 {
                out[(c * h + by * 8 + i / 8) * w + bx * 8 + i % 8] = px[i];
            }
        }
    }
    out
}

fn map_pixels(data: &mut [f64], n: usize, f: impl Fn([f64; 3]) -> [f64; 3]) {
    for i in 0..n {
        let v = f([data[i], data[n + i], data[2 * n + i]]);
        for c in 0..3 {
            data[c * n + i] = v[c];
        }
    }
}

/// RGB `[0, 1]` image → quantization-step-scaled DCT coefficients.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub tables: QuantTables,
}

impl CustomOp for Analysis {
    fn name(&self) -> &'static str {
        "jpeg_analysis"
    }

    fn forward(&self, inputs: &[&Tensor]) -> panoview_nn::Result<Tensor> {
        let (h, w) = image_dims("jpeg_analysis", inputs[0])?;
        let mut ycc = inputs[0].data().to_vec();
        map_pixels(&mut ycc, h * w, |rgb| {
            let v = mix(&RGB_TO_YCC, rgb.map(|x| 255.0 * x));
            [v[0] - 128.0, v[1], v[2]]
        });
        let out = blockwise(&ycc, h, w, |c, blk| {
            let t = self.tables.for_channel(c);
            let z = to_zigzag(&fdct(&blk));
            std::array::from_fn(|k| z[k] / t[k] as f64)
        });
        Tensor::new(&[3, h * w / 64, 64], out)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (h, w) = (inputs[0].shape()[1], inputs[0].shape()[2]);
        let mut g = unblock(grad.data(), h, w, |c, blk| {
            let t = self.tables.for_channel(c);
            let z: [f64; 64] = std::array::from_fn(|k| blk[k] / t[k] as f64);
            idct(&from_zigzag(&z))
        });
        map_pixels(&mut g, h * w, |v| mix_t(&RGB_TO_YCC, v).map(|x| 255.0 * x));
        vec![Tensor::new(inputs[0].shape(), g).unwrap()]
    }
}

/// Scaled coefficients → RGB image: dequantize, inverse DCT, inverse color
/// transform. No clamping, so the map stays linear.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub tables: QuantTables,
    pub height: usize,
    pub width: usize,
}

impl CustomOp for Synthesis {
    fn name(&self) -> &'static str {
        "jpeg_synthesis"
    }

    fn forward(&self, inputs: &[&Tensor]) -> panoview_nn::Result<Tensor> {
        let (h, w) = (self.height, self.width);
        let want = [3, h * w / 64, 64];
        if inputs[0].shape() != want || h % 8 != 0 || w % 8 != 0 {
            return Err(shape_err("jpeg_synthesis", format!("{:?} for {h}x{w}", inputs[0].shape())));
        }
        let mut px = unblock(inputs[0].data(), h, w, |c, blk| {
            let t = self.tables.for_channel(c);
            let z: [f64; 64] = std::array::from_fn(|k| blk[k] * t[k] as f64);
            idct(&from_zigzag(&z))
        });
        map_pixels(&mut px, h * w, |v| mix(&YCC_TO_RGB, [v[0] + 128.0, v[1], v[2]]).map(|x| x / 255.0));
        Tensor::new(&[3, h, w], px)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (h, w) = (self.height, self.width);
        let mut g = grad.data().to_vec();
        map_pixels(&mut g, h * w, |v| mix_t(&YCC_TO_RGB, v).map(|x| x / 255.0));
        let out = blockwise(&g, h, w, |c, blk| {
            let t = self.tables.for_channel(c);
            let z = to_zigzag(&fdct(&blk));
            std::array::from_fn(|k| z[k] * t[k] as f64)
        });
        vec![Tensor::new(inputs[0].shape(), out).unwrap()]
    }
}

/// How training-time quantization is relaxed.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantMode {
    /// Round in the forward pass, identity gradient.
    StraightThrough,
    /// Add the given noise (normally uniform in `[−0.5, 0.5)`), identity
    /// gradient. Smooth, so finite differences agree with the backward pass.
    Noise(Arc<Vec<f64>>),
    /// Plain rounding as at inference; gradient is also passed through.
    Round,
}

#[derive(Debug, Clone)]
pub struct Quantize {
    pub mode: QuantMode,
}

impl CustomOp for Quantize {
    fn name(&self) -> &'static str {
        "quantize"
    }

    fn forward(&self, inputs: &[&Tensor]) -> panoview_nn::Result<Tensor> {
        match &self.mode {
            QuantMode::StraightThrough | QuantMode::Round => Ok(inputs[0].map(f64::round)),
            QuantMode::Noise(n) => {
                if n.len() != inputs[0].len() {
                    return Err(shape_err("quantize", format!("{} noise samples for {}", n.len(), inputs[0].len())));
                }
                let d = inputs[0].data().iter().zip(n.iter()).map(|(x, u)| x + u).collect();
                Tensor::new(inputs[0].shape(), d)
            }
        }
    }

    fn backward(&self, _inputs: &[&Tensor], _out: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        vec![grad.clone()]
    }
}

/// Total bits of scaled coefficients `[3, blocks, 64]` under the Laplace
/// model with log-scales `[2, 64]`. DC terms use block-to-block differences.
#[derive(Debug, Clone, Copy)]
pub struct LaplaceBits;

impl LaplaceBits {
    /// Symbol value for every coefficient and the coefficient it is
    /// differenced against, if any.
    fn symbols(q: &Tensor) -> Vec<(f64, Option<usize>)> {
        let nb = q.shape()[1];
        let d = q.data();
        let mut out = Vec::with_capacity(d.len());
        for c in 0..3 {
            for b in 0..nb {
                for k in 0..64 {
                    let i = (c * nb + b) * 64 + k;
                    if k == 0 && b > 0 {
                        let prev = (c * nb + b - 1) * 64;
                        out.push((d[i] - d[prev], Some(prev)));
                    } else {
                        out.push((d[i], None));
                    }
                }
            }
        }
        out
    }
}

impl CustomOp for LaplaceBits {
    fn name(&self) -> &'static str {
        "laplace_bits"
    }

    fn forward(&self, inputs: &[&Tensor]) -> panoview_nn::Result<Tensor> {
        let (q, ls) = (inputs[0], inputs[1]);
        if q.shape().len() != 3 || q.shape()[0] != 3 || q.shape()[2] != 64 || ls.shape() != [2, 64] {
            return Err(shape_err("laplace_bits", format!("{:?} with scales {:?}", q.shape(), ls.shape())));
        }
        let per = q.shape()[1] * 64;
        let bits: f64 = Self::symbols(q)
            .iter()
            .enumerate()
            .map(|(i, (s, _))| {
                let slot = usize::from(i >= per) * 64 + i % 64;
                -laplace_mass(*s, ls.data()[slot].exp()).max(PROB_FLOOR).log2()
            })
            .sum();
        Ok(Tensor::scalar(bits))
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (q, ls) = (inputs[0], inputs[1]);
        let g = grad.item() / -std::f64::consts::LN_2;
        let per = q.shape()[1] * 64;
        let mut gq = vec![0.0; q.len()];
        let mut gl = vec![0.0; 128];
        for (i, (s, prev)) in Self::symbols(q).into_iter().enumerate() {
            let slot = usize::from(i >= per) * 64 + i % 64;
            let b = ls.data()[slot].exp();
            if laplace_mass(s, b) <= PROB_FLOOR {
                continue;
            }
            let (dx, dlb) = laplace_mass_grad(s, b);
            gq[i] += g * dx;
            if let Some(p) = prev {
                gq[p] -= g * dx;
            }
            gl[slot] += g * dlb;
        }
        vec![
            Tensor::new(q.shape(), gq).unwrap(),
            Tensor::new(&[2, 64], gl).unwrap(),
        ]
    }
}

/// Output of [`compress_in_graph`].
#[derive(Debug, Clone, Copy)]
pub struct SimulatedCodec {
    /// Decoded image `[3, h, w]`.
    pub decoded: Var,
    /// Estimated bits, shape `[1]`.
    pub bits: Var,
}

/// Simulates encode/decode of `img` (`[3, h, w]`) inside the graph, with the
/// rate measured under `log_scales` (`[2, 64]`).
pub fn compress_in_graph(
    g: &mut Graph,
    img: Var,
    log_scales: Var,
    tables: &QuantTables,
    mode: QuantMode,
) -> panoview_nn::Result<SimulatedCodec> {
    let (h, w) = (g.shape(img)[1], g.shape(img)[2]);
    let coef = g.custom(Arc::new(Analysis { tables: tables.clone() }), &[img])?;
    let q = g.custom(Arc::new(Quantize { mode }), &[coef])?;
    let bits = g.custom(Arc::new(LaplaceBits), &[q, log_scales])?;
    let decoded = g.custom(
        Arc::new(Synthesis {
            tables: tables.clone(),
            height: h,
            width: w,
        }),
        &[q],
    )?;
    Ok(SimulatedCodec { decoded, bits })
}
