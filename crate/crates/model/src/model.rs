//! Parameter layout of the full model and checkpoint conversion.

use std::collections::BTreeMap;

use panoview_nn::{layers, Checkpoint, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::downsampler;
use crate::error::{ModelError, Result};

/// Learned per-position log-scales of the rate model, `[2, 64]`.
pub const RATE_PARAM: &str = "rate.log_scale";

/// Number of convolutions in the encoder.
pub const ENCODER_DEPTH: usize = 4;

/// Length of the pixel-shape descriptor.
pub const DESCRIPTOR_LEN: usize = 10;

const KIND: &str = "panoview-model";

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let names = downsampler::layer_names(cfg);
        let last = names.len() - 1;
        for (i, name) in names.iter().enumerate() {
            let cin = if i == 0 { 3 } else { cfg.down_channels };
            let cout = if i == last { 3 } else { cfg.down_channels };
            layers::init_conv(&mut p, name, cin, cout, 3, &mut rng)?;
        }
        for i in 0..ENCODER_DEPTH {
            let cin = if i == 0 { 3 } else { cfg.channels };
            layers::init_conv(&mut p, &format!("enc.{i}"), cin, cfg.channels, 3, &mut rng)?;
        }
        layers::init_linear(&mut p, "est.amp", cfg.channels, 2 * cfg.freqs, &mut rng)?;
        layers::init_linear(&mut p, "est.freq", cfg.channels, 2 * cfg.freqs, &mut rng)?;
        layers::init_linear(&mut p, "est.phase", DESCRIPTOR_LEN, cfg.freqs, &mut rng)?;
        layers::init_linear(&mut p, "dec.0", 2 * cfg.freqs, cfg.hidden, &mut rng)?;
        layers::init_linear(&mut p, "dec.1", cfg.hidden, cfg.hidden, &mut rng)?;
        layers::init_linear(&mut p, "dec.2", cfg.hidden, 3, &mut rng)?;
        p.insert(RATE_PARAM, Tensor::zeros(&[2, 64]))?;
        Ok(Self { cfg: cfg.clone(), params: p })
    }

    /// Zeroes the last decoder layer, so the renderer reduces to its
    /// bilinear skip.
    pub fn zero_decoder(&mut self) -> Result<()> {
        for n in ["dec.2.w", "dec.2.b"] {
            self.params.get_mut(n)?.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, seed: u64, extra: &BTreeMap<String, String>) -> Checkpoint {
        let mut meta = extra.clone();
        meta.insert("kind".into(), KIND.into());
        self.cfg.to_meta(&mut meta);
        Checkpoint {
            seed,
            meta,
            tensors: self.params.clone(),
        }
    }

    /// Rebuilds a model from a checkpoint; tensors outside the model layout
    /// (optimizer state) are ignored.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").map(String::as_str) != Some(KIND) {
            return Err(ModelError::Config("checkpoint is not a panoview model".into()));
        }
        let keys = ["scale", "patch", "channels", "down_channels", "freqs", "hidden", "descriptor"];
        let meta: BTreeMap<String, String> = ck
            .meta
            .iter()
            .filter(|(k, _)| keys.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let cfg = ModelConfig::from_meta(&meta)?;
        let mut model = Self::init(&cfg, 0)?;
        let names: Vec<String> = model.params.names().to_vec();
        for name in names {
            let src = ck.tensors.get(&name)?;
            let dst = model.params.get_mut(&name)?;
            if src.shape() != dst.shape() {
                return Err(ModelError::ShapeMismatch(format!(
                    "{name}: checkpoint {:?}, model {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(model)
    }
}
