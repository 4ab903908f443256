//! Viewport renderer: encoder, local texture estimator and local-ensemble
//! decoding on top of a bilinear skip.

use std::f64::consts::PI;

use panoview_core::geometry::{inverse_map, ViewportCoord, ViewportSpec};
use panoview_core::resample::bilinear_taps;
use panoview_core::ssr::{shape_2d_baseline, shape_at, SsrOptions};
use panoview_core::Image;
use panoview_nn::kernels::gelu;
use panoview_nn::{layers, Bound, Graph, Padding, Tensor, Var};
use rayon::prelude::*;

use crate::config::DescriptorMode;
use crate::error::Result;
use crate::model::{Model, DESCRIPTOR_LEN, ENCODER_DEPTH};

/// One of the four LR cells around a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Flat index `row · W + col` into the LR raster.
    pub index: usize,
    /// Local ensemble weight.
    pub weight: f64,
    /// Query minus cell center, in normalized patch units.
    pub delta: [f64; 2],
}

/// Neighborhood of LR position `(x, y)` (pixel centers on integers).
/// Columns wrap when `wrap` is set; rows always clamp.
pub fn neighbors(lr_h: usize, lr_w: usize, x: f64, y: f64, wrap: bool, delta_scale: f64) -> [Neighbor; 4] {
    bilinear_taps(lr_h, lr_w, x, y, wrap).map(|t| Neighbor {
        index: t.row * lr_w + t.col,
        weight: t.weight,
        delta: [(x - t.center_x) * delta_scale, (y - t.center_y) * delta_scale],
    })
}

/// LR position of an HR position for downscale factor `s`.
pub fn hr_to_lr(x: f64, s: usize) -> f64 {
    (x - (s as f64 - 1.0) / 2.0) / s as f64
}

/// Shape descriptor of viewport position `y` under `mode`.
pub fn descriptor(mode: DescriptorMode, spec: &ViewportSpec, y: ViewportCoord, h: usize, w: usize) -> [f64; 10] {
    match mode {
        DescriptorMode::Spherical => shape_at(spec, y, h, w, SsrOptions::default()).flat(),
        DescriptorMode::Planar => shape_2d_baseline(spec, y, h, w, true).flat(),
        DescriptorMode::None => [0.0; 10],
    }
}

/// Queries flattened neighbor-major: row `j·Q + q` holds neighbor `j` of
/// query `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch {
    pub len: usize,
    pub index: Vec<usize>,
    pub weights: Vec<f64>,
    pub deltas: Vec<[f64; 2]>,
    /// `[4Q, 10]`, each query's descriptor repeated for its neighbors.
    pub descriptors: Vec<f64>,
}

impl QueryBatch {
    pub fn new(neigh: &[[Neighbor; 4]], desc: &[[f64; 10]]) -> Self {
        assert_eq!(neigh.len(), desc.len());
        let q = neigh.len();
        let mut b = Self {
            len: q,
            index: Vec::with_capacity(4 * q),
            weights: Vec::with_capacity(4 * q),
            deltas: Vec::with_capacity(4 * q),
            descriptors: Vec::with_capacity(4 * q * DESCRIPTOR_LEN),
        };
        for j in 0..4 {
            for (n, d) in neigh.iter().zip(desc) {
                b.index.push(n[j].index);
                b.weights.push(n[j].weight);
                b.deltas.push(n[j].delta);
                b.descriptors.extend_from_slice(d);
            }
        }
        b
    }
}

/// Latent features `[C, h, w]` of an LR image `[3, h, w]`.
pub fn encode(g: &mut Graph, p: &Bound, x: Var, padding: Padding) -> Result<Var> {
    let mut z = layers::conv(g, p, "enc.0", x, 1, padding)?;
    for i in 1..ENCODER_DEPTH {
        let r = layers::conv(g, p, &format!("enc.{i}"), z, 1, padding)?;
        let r = g.gelu(r);
        z = g.add(z, r)?;
    }
    Ok(z)
}

/// RGB predictions `[Q, 3]` for a query batch, from latents `z [C, h, w]`
/// and the LR image `lr [3, h, w]` they were computed from.
pub fn predict(g: &mut Graph, p: &Bound, z: Var, lr: Var, batch: &QueryBatch) -> Result<Var> {
    let zj = g.gather_pixels(z, batch.index.clone())?;
    let lj = g.gather_pixels(lr, batch.index.clone())?;
    let skip = g.group_weighted_sum(lj, batch.weights.clone(), 4)?;

    let amp = layers::linear(g, p, "est.amp", zj)?;
    let freq = layers::linear(g, p, "est.freq", zj)?;
    let dot = g.pair_dot(freq, batch.deltas.clone())?;
    let desc = g.constant(Tensor::new(&[4 * batch.len, DESCRIPTOR_LEN], batch.descriptors.clone())?);
    let shift = layers::linear(g, p, "est.phase", desc)?;
    let phase = g.add(dot, shift)?;
    let phase = g.scale(phase, PI);
    let (c, s) = (g.cos(phase), g.sin(phase));
    let wave = g.concat_cols(c, s)?;
    let feat = g.mul(amp, wave)?;

    let mut h = layers::linear(g, p, "dec.0", feat)?;
    h = g.gelu(h);
    h = layers::linear(g, p, "dec.1", h)?;
    h = g.gelu(h);
    let rgb = layers::linear(g, p, "dec.2", h)?;
    let res = g.group_weighted_sum(rgb, batch.weights.clone(), 4)?;
    Ok(g.add(skip, res)?)
}

pub(crate) fn image_tensor(img: &Image) -> Tensor {
    Tensor::new(&[3, img.height(), img.width()], img.data().to_vec()).expect("image is [3, h, w]")
}

pub(crate) fn tensor_image(t: &Tensor) -> Result<Image> {
    let s = t.shape();
    Ok(Image::from_planar(s[1], s[2], t.data().to_vec())?)
}

/// Decoded LR panorama with its latent features.
#[derive(Debug, Clone)]
pub struct Latent {
    pub lr: Image,
    pub z: Tensor,
}

const RENDER_CHUNK: usize = 2048;

impl Model {
    /// Learned downscale of a whole panorama, clamped to `[0, 1]`.
    pub fn downscale(&self, hr: &Image) -> Result<Image> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let x = g.constant(image_tensor(hr));
        let y = crate::downsampler::downsample(&mut g, &p, &self.cfg, x, Padding::WrapWidth)?;
        Ok(tensor_image(g.value(y))?.clamp01())
    }

    /// Runs the encoder once over a decoded LR panorama.
    pub fn encode_image(&self, lr: &Image) -> Result<Latent> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let x = g.constant(image_tensor(lr));
        let z = encode(&mut g, &p, x, Padding::WrapWidth)?;
        Ok(Latent {
            lr: lr.clone(),
            z: g.value(z).clone(),
        })
    }

    fn pixel_neighbors(&self, lat: &Latent, spec: &ViewportSpec, y: ViewportCoord) -> [Neighbor; 4] {
        let (h, w) = (lat.lr.height(), lat.lr.width());
        let x = inverse_map(spec, y, h, w);
        neighbors(h, w, x.x1, x.x2, true, self.cfg.delta_scale())
    }

    fn pixel_descriptor(&self, lat: &Latent, spec: &ViewportSpec, y: ViewportCoord) -> [f64; 10] {
        let s = self.cfg.scale;
        descriptor(self.cfg.descriptor, spec, y, lat.lr.height() * s, lat.lr.width() * s)
    }

    /// Renders a viewport straight from the latent grid. Pixels are
    /// processed in parallel chunks; the output is clamped to `[0, 1]`.
    pub fn render_viewport(&self, lat: &Latent, spec: &ViewportSpec) -> Result<Image> {
        spec.validate()?;
        let n = spec.pixel_count();
        let starts: Vec<usize> = (0..n).step_by(RENDER_CHUNK).collect();
        let chunks: Vec<Vec<f64>> = starts
            .par_iter()
            .map(|&start| -> Result<Vec<f64>> {
                let end = (start + RENDER_CHUNK).min(n);
                let ys: Vec<ViewportCoord> = (start..end)
                    .map(|i| ViewportCoord::new((i % spec.width) as f64, (i / spec.width) as f64))
                    .collect();
                let neigh: Vec<_> = ys.iter().map(|&y| self.pixel_neighbors(lat, spec, y)).collect();
                let desc: Vec<_> = ys.iter().map(|&y| self.pixel_descriptor(lat, spec, y)).collect();
                let batch = QueryBatch::new(&neigh, &desc);
                let mut g = Graph::new();
                let p = self.params.bind_frozen(&mut g);
                let z = g.constant(lat.z.clone());
                let lr = g.constant(image_tensor(&lat.lr));
                let out = predict(&mut g, &p, z, lr, &batch)?;
                Ok(g.value(out).data().to_vec())
            })
            .collect::<Result<_>>()?;
        let rows: Vec<f64> = chunks.concat();
        Ok(Image::from_fn(spec.height, spec.width, |v, u| {
            let i = v * spec.width + u;
            [0, 1, 2].map(|c| rows[i * 3 + c].clamp(0.0, 1.0))
        }))
    }

    /// One viewport pixel evaluated with plain loops, independent of the
    /// graph machinery. Clamped like [`Model::render_viewport`].
    pub fn render_pixel(&self, lat: &Latent, spec: &ViewportSpec, y: ViewportCoord) -> Result<[f64; 3]> {
        let neigh = self.pixel_neighbors(lat, spec, y);
        let desc = self.pixel_descriptor(lat, spec, y);
        let w = |n: &str| self.params.get(n).map(|t| t.data());
        let lin = |name: &str, x: &[f64]| -> Result<Vec<f64>> {
            let wt = w(&format!("{name}.w"))?;
            let b = w(&format!("{name}.b"))?;
            Ok((0..b.len())
                .map(|o| b[o] + (0..x.len()).map(|i| wt[o * x.len() + i] * x[i]).sum::<f64>())
                .collect())
        };
        let (c, hw) = (lat.z.shape()[0], lat.lr.height() * lat.lr.width());
        let f = self.cfg.freqs;
        let shift = lin("est.phase", &desc)?;
        let mut out = [0.0; 3];
        for nb in &neigh {
            let zj: Vec<f64> = (0..c).map(|ch| lat.z.data()[ch * hw + nb.index]).collect();
            let amp = lin("est.amp", &zj)?;
            let freq = lin("est.freq", &zj)?;
            let mut feat = vec![0.0; 2 * f];
            for k in 0..f {
                let ph = PI * (freq[2 * k] * nb.delta[0] + freq[2 * k + 1] * nb.delta[1] + shift[k]);
                feat[k] = amp[k] * ph.cos();
                feat[f + k] = amp[f + k] * ph.sin();
            }
            let h0: Vec<f64> = lin("dec.0", &feat)?.into_iter().map(gelu).collect();
            let h1: Vec<f64> = lin("dec.1", &h0)?.into_iter().map(gelu).collect();
            let rgb = lin("dec.2", &h1)?;
            for ch in 0..3 {
                out[ch] += nb.weight * (lat.lr.data()[ch * hw + nb.index] + rgb[ch]);
            }
        }
        Ok(out.map(|v| v.clamp(0.0, 1.0)))
    }
}
