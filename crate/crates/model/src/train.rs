//! End-to-end optimization of downsampler, rate model and renderer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use panoview_codec::jpeg::{analyze, quantize};
use panoview_codec::ops::{compress_in_graph, QuantMode};
use panoview_codec::rate::fit_model;
use panoview_codec::QuantTables;
use panoview_core::geometry::ViewportSpec;
use panoview_core::resample::bicubic_downscale_erp;
use panoview_core::sampling::{denormalize, derive_seed, dis_samp, pick_view_for_patch, DpsDraw, PatchSpec};
use panoview_core::{synth, Error as CoreError, Image};
use panoview_nn::{Adam, Bound, Checkpoint, Graph, Padding, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{DataSource, ModelConfig, QuantRelax, TrainConfig};
use crate::downsampler::downsample;
use crate::error::{ModelError, Result};
use crate::losses::{graph_loss_guide, graph_loss_pix, graph_loss_total, LossParts, LossWeights};
use crate::model::{Model, RATE_PARAM};
use crate::vr::{descriptor, encode, hr_to_lr, image_tensor, neighbors, predict, Neighbor, QueryBatch};

/// View redraws on an empty patch/viewport overlap before a new crop.
pub const VIEW_RETRIES: usize = 8;

const INIT_STREAM: u64 = u64::MAX;

/// One training example: a DPS draw and the view that produced it.
#[derive(Debug, Clone)]
pub struct Example {
    pub draw: DpsDraw,
    pub spec: ViewportSpec,
    /// Size of the panorama the patch came from.
    pub erp_height: usize,
    pub erp_width: usize,
    /// Quantization noise for [`QuantRelax::Noise`].
    pub noise: Option<Vec<f64>>,
}

/// Draws one example from `data` with a dedicated generator.
pub fn draw_example(cfg: &TrainConfig, data: &[Image], rng: &mut ChaCha8Rng) -> Result<Example> {
    let (p, s) = (cfg.model.patch, cfg.model.scale);
    let sampler = cfg.view_sampler();
    loop {
        let img = &data[rng.random_range(0..data.len())];
        let (h, w) = (img.height(), img.width());
        if h < p {
            return Err(ModelError::Config(format!("image height {h} below patch size {p}")));
        }
        let ps = PatchSpec::new(rng.random_range(0..w), rng.random_range(0..=h - p), p, s)?;
        for _ in 0..VIEW_RETRIES {
            let spec = pick_view_for_patch(&ps, h, w, &sampler, rng)?;
            match dis_samp(img, &ps, &spec, cfg.samples, rng) {
                Ok(draw) => {
                    let noise = (cfg.quant == QuantRelax::Noise).then(|| {
                        let n = 3 * (p / s) * (p / s);
                        (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
                    });
                    return Ok(Example {
                        draw,
                        spec,
                        erp_height: h,
                        erp_width: w,
                        noise,
                    });
                }
                Err(CoreError::EmptyOverlap) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Queries of an example's sample set on its `p/s × p/s` LR patch.
pub fn example_queries(cfg: &ModelConfig, ex: &Example) -> QueryBatch {
    let (p, s) = (cfg.patch, cfg.scale);
    let side = p / s;
    let smp = &ex.draw.samples;
    let neigh: Vec<[Neighbor; 4]> = smp
        .coords
        .iter()
        .map(|&c| {
            let hr = denormalize(c, p);
            neighbors(side, side, hr_to_lr(hr.x1, s), hr_to_lr(hr.x2, s), false, cfg.delta_scale())
        })
        .collect();
    let desc: Vec<[f64; 10]> = smp
        .view_coords
        .iter()
        .map(|&y| descriptor(cfg.descriptor, &ex.spec, y, ex.erp_height, ex.erp_width))
        .collect();
    QueryBatch::new(&neigh, &desc)
}

/// Graph nodes of one example's loss.
#[derive(Debug, Clone, Copy)]
pub struct ExampleLoss {
    pub total: Var,
    pub pix: Var,
    pub guide: Var,
    pub bpp: Var,
    pub lr_pred: Var,
}

/// Builds downsample → compress → render → losses for one example.
pub fn example_loss(
    g: &mut Graph,
    p: &Bound,
    cfg: &ModelConfig,
    ex: &Example,
    tables: &QuantTables,
    w: LossWeights,
) -> Result<ExampleLoss> {
    let patch = cfg.patch;
    let x = g.constant(image_tensor(&ex.draw.hr_patch));
    let lr_pred = downsample(g, p, cfg, x, Padding::Zero)?;
    let mode = match &ex.noise {
        Some(n) => QuantMode::Noise(Arc::new(n.clone())),
        None => QuantMode::StraightThrough,
    };
    let codec = compress_in_graph(g, lr_pred, p.get(RATE_PARAM)?, tables, mode)?;
    let z = encode(g, p, codec.decoded, Padding::Zero)?;
    let batch = example_queries(cfg, ex);
    let pred = predict(g, p, z, codec.decoded, &batch)?;
    let pix = graph_loss_pix(g, pred, &ex.draw.samples.pixels)?;
    let guide = graph_loss_guide(g, lr_pred, &ex.draw.lr_patch, patch, cfg.scale)?;
    let bits = g.sum(codec.bits);
    let bpp = g.scale(bits, 1.0 / (patch * patch) as f64);
    let total = graph_loss_total(g, pix, guide, bpp, w)?;
    Ok(ExampleLoss {
        total,
        pix,
        guide,
        bpp,
        lr_pred,
    })
}

/// Rate-model scales fitted to the bicubic LR versions of `data`.
pub fn fitted_log_scales(data: &[Image], scale: usize, tables: &QuantTables) -> Result<Tensor> {
    let blocks = data
        .iter()
        .map(|img| Ok(quantize(&analyze(&bicubic_downscale_erp(img, scale)?), tables)))
        .collect::<Result<Vec<_>>>()?;
    let m = fit_model(&blocks);
    Ok(Tensor::new(&[2, 64], m.log_scale.iter().flatten().copied().collect())?)
}

/// Procedural training panoramas.
pub fn synthetic_data(count: usize, height: usize, width: usize, seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| synth::panorama(height, width, derive_seed(seed, 1000 + i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub loss: f64,
    pub parts: LossParts,
}

pub const LOG_HEADER: &str = "iter,loss,pix,guide,bpp";

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:.8},{:.8},{:.8},{:.8}",
            self.iter, self.loss, self.parts.pix, self.parts.guide, self.parts.bpp
        )
    }
}

pub struct Trainer {
    pub cfg: TrainConfig,
    model: Model,
    adam: Adam,
    tables: QuantTables,
    data: Vec<Image>,
    iter: usize,
}

impl Trainer {
    /// Fresh run. `data` must be non-empty; every image at least
    /// `patch` rows tall and divisible by the scale.
    pub fn new(cfg: TrainConfig, data: Vec<Image>) -> Result<Self> {
        cfg.validate()?;
        check_data(&cfg, &data)?;
        let mut model = Model::init(&cfg.model, derive_seed(cfg.seed, INIT_STREAM))?;
        let tables = QuantTables::from_quality(cfg.quality);
        *model.params.get_mut(RATE_PARAM)? = fitted_log_scales(&data, cfg.model.scale, &tables)?;
        Ok(Self {
            adam: Adam::new(cfg.lr),
            tables,
            model,
            data,
            iter: 0,
            cfg,
        })
    }

    /// Continues a run saved with [`Trainer::checkpoint`].
    pub fn resume(cfg: TrainConfig, data: Vec<Image>, ck: &Checkpoint) -> Result<Self> {
        cfg.validate()?;
        check_data(&cfg, &data)?;
        let model = Model::from_checkpoint(ck)?;
        if model.cfg != cfg.model {
            return Err(ModelError::Config("checkpoint architecture differs from the config".into()));
        }
        if ck.seed != cfg.seed {
            return Err(ModelError::Config(format!("seed: checkpoint has {}, config {}", ck.seed, cfg.seed)));
        }
        let iter = ck
            .meta
            .get("iteration")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ModelError::Config("checkpoint has no iteration".into()))?;
        let mut adam = Adam::new(cfg.lr);
        adam.import(&model.params, &ck.tensors)?;
        Ok(Self {
            tables: QuantTables::from_quality(cfg.quality),
            adam,
            model,
            data,
            iter,
            cfg,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut meta = BTreeMap::new();
        meta.insert("iteration".to_string(), self.iter.to_string());
        let mut ck = self.model.to_checkpoint(self.cfg.seed, &meta);
        self.adam.export(&self.model.params, &mut ck.tensors)?;
        Ok(ck)
    }

    /// Examples of the current iteration, drawn in parallel from per-item
    /// seeds.
    pub fn batch_examples(&self) -> Result<Vec<Example>> {
        let it = derive_seed(self.cfg.seed, self.iter as u64);
        (0..self.cfg.batch)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(it, b as u64));
                draw_example(&self.cfg, &self.data, &mut rng)
            })
            .collect()
    }

    /// One optimizer step over a batch.
    pub fn step(&mut self) -> Result<LogRow> {
        let examples = self.batch_examples()?;
        let w = LossWeights {
            guide: self.cfg.lambda_guide,
            bpp: self.cfg.lambda_bpp,
        };
        let mut g = Graph::new();
        let p = self.model.params.bind(&mut g);
        let mut total: Option<Var> = None;
        let mut parts = LossParts::default();
        for ex in &examples {
            let l = example_loss(&mut g, &p, &self.model.cfg, ex, &self.tables, w)?;
            parts.pix += g.value(l.pix).item();
            parts.guide += g.value(l.guide).item();
            parts.bpp += g.value(l.bpp).item();
            total = Some(match total {
                Some(t) => g.add(t, l.total)?,
                None => l.total,
            });
        }
        let n = examples.len() as f64;
        let total = g.scale(total.expect("batch is non-empty"), 1.0 / n);
        let loss = g.value(total).item();
        let grads = g.backward(total)?;
        let grads = p.grads(&self.model.params, &grads);
        self.adam.step(&mut self.model.params, &grads)?;
        self.iter += 1;
        Ok(LogRow {
            iter: self.iter,
            loss,
            parts: LossParts {
                pix: parts.pix / n,
                guide: parts.guide / n,
                bpp: parts.bpp / n,
            },
        })
    }

    /// Steps until `cfg.iterations`, calling `each` after every step.
    pub fn run(&mut self, mut each: impl FnMut(&Self, &LogRow) -> Result<()>) -> Result<Vec<LogRow>> {
        let mut log = Vec::new();
        while self.iter < self.cfg.iterations {
            let row = self.step()?;
            each(self, &row)?;
            log.push(row);
        }
        Ok(log)
    }
}

fn check_data(cfg: &TrainConfig, data: &[Image]) -> Result<()> {
    if data.is_empty() {
        return Err(ModelError::Config("data: no training images".into()));
    }
    let s = cfg.model.scale;
    for (i, img) in data.iter().enumerate() {
        if img.height() < cfg.model.patch || img.width() < cfg.model.patch {
            return Err(ModelError::Config(format!("data: image {i} smaller than the patch")));
        }
        if img.height() % s != 0 || img.width() % s != 0 {
            return Err(ModelError::Config(format!("data: image {i} not divisible by scale {s}")));
        }
    }
    Ok(())
}

/// Images named by the config's synthetic data source.
pub fn config_synthetic_data(cfg: &TrainConfig) -> Option<Vec<Image>> {
    match cfg.data {
        DataSource::Synthetic { count, height, width } => Some(synthetic_data(count, height, width, cfg.seed)),
        DataSource::Files(_) => None,
    }
}

/// Trailing moving average with the given window.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv());
    }
    s
}
