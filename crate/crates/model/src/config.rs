//! Model and training configuration, read from flat `key = value` files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use panoview_core::sampling::{ViewSampler, DEFAULT_SAMPLE_COUNT, FOV_CHOICES_DEG, RESOLUTION_CHOICES};

use crate::error::{ModelError, Result};

/// Which pixel-shape descriptor feeds the phase estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorMode {
    /// Spherical central differences of the viewport-to-sphere map.
    Spherical,
    /// Plain ERP-plane differences, no seam or latitude handling.
    Planar,
    /// All-zero descriptor.
    None,
}

impl FromStr for DescriptorMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spherical" => Ok(Self::Spherical),
            "planar" => Ok(Self::Planar),
            "none" => Ok(Self::None),
            _ => Err(ModelError::Config(format!("descriptor: unknown mode '{s}'"))),
        }
    }
}

impl DescriptorMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spherical => "spherical",
            Self::Planar => "planar",
            Self::None => "none",
        }
    }
}

/// Training-time relaxation of coefficient rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantRelax {
    StraightThrough,
    Noise,
}

impl FromStr for QuantRelax {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ste" => Ok(Self::StraightThrough),
            "noise" => Ok(Self::Noise),
            _ => Err(ModelError::Config(format!("quant: unknown mode '{s}'"))),
        }
    }
}

impl QuantRelax {
    pub fn name(self) -> &'static str {
        match self {
            Self::StraightThrough => "ste",
            Self::Noise => "noise",
        }
    }
}

/// Architecture hyperparameters. Stored in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Downscale factor, a power of two.
    pub scale: usize,
    /// HR patch side used in training; fixes the unit of local offsets.
    pub patch: usize,
    /// Encoder feature channels `C`.
    pub channels: usize,
    /// Downsampler hidden channels.
    pub down_channels: usize,
    /// Frequency count `F`.
    pub freqs: usize,
    /// Decoder hidden width.
    pub hidden: usize,
    pub descriptor: DescriptorMode,
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            scale: 2,
            patch: 64,
            channels: 16,
            down_channels: 16,
            freqs: 32,
            hidden: 64,
            descriptor: DescriptorMode::Spherical,
        }
    }

    pub fn full_scale() -> Self {
        Self {
            scale: 4,
            patch: 256,
            channels: 64,
            down_channels: 32,
            freqs: 128,
            hidden: 256,
            descriptor: DescriptorMode::Spherical,
        }
    }

    /// Local offsets are measured in normalized patch units: one LR pixel
    /// spans `2 s / p`.
    pub fn delta_scale(&self) -> f64 {
        2.0 * self.scale as f64 / self.patch as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, why: &str| Err(ModelError::Config(format!("{k}: {why}")));
        if !self.scale.is_power_of_two() || self.scale < 2 {
            return bad("scale", "must be a power of two ≥ 2");
        }
        if self.patch == 0 || self.patch % self.scale != 0 || (self.patch / self.scale) % 8 != 0 {
            return bad("patch", "patch / scale must be a positive multiple of 8");
        }
        for (k, v) in [
            ("channels", self.channels),
            ("down_channels", self.down_channels),
            ("freqs", self.freqs),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                return bad(k, "must be positive");
            }
        }
        Ok(())
    }

    pub fn to_meta(&self, out: &mut BTreeMap<String, String>) {
        for (k, v) in [
            ("scale", self.scale.to_string()),
            ("patch", self.patch.to_string()),
            ("channels", self.channels.to_string()),
            ("down_channels", self.down_channels.to_string()),
            ("freqs", self.freqs.to_string()),
            ("hidden", self.hidden.to_string()),
            ("descriptor", self.descriptor.name().to_string()),
        ] {
            out.insert(k.to_string(), v);
        }
    }

    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::desk();
        for (k, v) in meta {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key; returns `false` if the key is not a model key.
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "scale" => self.scale = parse(key, value)?,
            "patch" => self.patch = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "down_channels" => self.down_channels = parse(key, value)?,
            "freqs" => self.freqs = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "descriptor" => self.descriptor = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| ModelError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| parse(key, s.trim()))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Where training images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files(Vec<String>),
    /// Procedural panoramas with the given count and size.
    Synthetic { count: usize, height: usize, width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub samples: usize,
    pub batch: usize,
    pub iterations: usize,
    pub lr: f64,
    pub lambda_guide: f64,
    pub lambda_bpp: f64,
    /// Quality of the codec tables used during training.
    pub quality: f64,
    pub quant: QuantRelax,
    pub fov_choices_deg: Vec<f64>,
    pub res_choices: Vec<usize>,
    pub independent_fov: bool,
    pub log_every: usize,
    pub checkpoint_every: usize,
    pub data: DataSource,
    pub out_dir: String,
}

/// Keys accepted in config files.
pub const CONFIG_KEYS: &[&str] = &[
    "scale",
    "patch",
    "channels",
    "down_channels",
    "freqs",
    "hidden",
    "descriptor",
    "seed",
    "samples",
    "batch",
    "iterations",
    "lr",
    "lambda_guide",
    "lambda_bpp",
    "quality",
    "quant",
    "fov_choices",
    "res_choices",
    "independent_fov",
    "log_every",
    "checkpoint_every",
    "data",
    "synthetic",
    "synthetic_height",
    "synthetic_width",
    "out_dir",
];

impl TrainConfig {
    /// Small configuration that trains in minutes on one core.
    pub fn desk() -> Self {
        Self {
            model: ModelConfig::desk(),
            seed: 0,
            samples: 1024,
            batch: 1,
            iterations: 500,
            lr: 1e-3,
            lambda_guide: 0.6,
            lambda_bpp: 0.01,
            quality: 75.0,
            quant: QuantRelax::StraightThrough,
            fov_choices_deg: FOV_CHOICES_DEG.to_vec(),
            res_choices: RESOLUTION_CHOICES.iter().map(|r| r / 4).collect(),
            independent_fov: true,
            log_every: 10,
            checkpoint_every: 0,
            data: DataSource::Synthetic {
                count: 2,
                height: 256,
                width: 512,
            },
            out_dir: "runs/desk".to_string(),
        }
    }

    /// The full-size protocol.
    pub fn full_scale() -> Self {
        Self {
            model: ModelConfig::full_scale(),
            samples: DEFAULT_SAMPLE_COUNT,
            batch: 16,
            iterations: 500_000,
            lr: 2e-4,
            res_choices: RESOLUTION_CHOICES.to_vec(),
            log_every: 100,
            checkpoint_every: 10_000,
            data: DataSource::Synthetic {
                count: 16,
                height: 1024,
                width: 2048,
            },
            out_dir: "runs/full".to_string(),
            ..Self::desk()
        }
    }

    pub fn view_sampler(&self) -> ViewSampler {
        ViewSampler {
            fov_choices: self.fov_choices_deg.iter().map(|d| d.to_radians()).collect(),
            res_choices: self.res_choices.clone(),
            independent: self.independent_fov,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.set(key, value)? {
            return Ok(());
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lambda_guide" => self.lambda_guide = parse(key, value)?,
            "lambda_bpp" => self.lambda_bpp = parse(key, value)?,
            "quality" => self.quality = parse(key, value)?,
            "quant" => self.quant = value.parse()?,
            "fov_choices" => self.fov_choices_deg = parse_list(key, value)?,
            "res_choices" => self.res_choices = parse_list(key, value)?,
            "independent_fov" => self.independent_fov = parse(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "data" => {
                self.data = DataSource::Files(
                    value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                )
            }
            "synthetic" | "synthetic_height" | "synthetic_width" => {
                let (mut count, mut height, mut width) = match self.data {
                    DataSource::Synthetic { count, height, width } => (count, height, width),
                    DataSource::Files(_) => (2, 256, 512),
                };
                let v = parse(key, value)?;
                match key {
                    "synthetic" => count = v,
                    "synthetic_height" => height = v,
                    _ => width = v,
                }
                self.data = DataSource::Synthetic { count, height, width };
            }
            "out_dir" => self.out_dir = value.to_string(),
            _ => return Err(ModelError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text on top of `self`. Blank lines and
    /// `#` comments are ignored; unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |k: &str, why: &str| Err(ModelError::Config(format!("{k}: {why}")));
        if self.samples == 0 {
            return bad("samples", "must be positive");
        }
        if self.batch == 0 {
            return bad("batch", "must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be a finite non-negative number");
        }
        if !(self.lambda_guide >= 0.0) || !(self.lambda_bpp >= 0.0) {
            return bad("lambda_guide", "loss weights must be non-negative");
        }
        if !(1.0..=100.0).contains(&self.quality) {
            return bad("quality", "must lie in [1, 100]");
        }
        if self.fov_choices_deg.is_empty() || self.fov_choices_deg.iter().any(|f| !(*f > 0.0 && *f < 180.0)) {
            return bad("fov_choices", "need degrees in (0, 180)");
        }
        if self.res_choices.is_empty() || self.res_choices.contains(&0) {
            return bad("res_choices", "need positive sizes");
        }
        match &self.data {
            DataSource::Files(f) if f.is_empty() => return bad("data", "no files listed"),
            DataSource::Synthetic { count, height, width } => {
                if *count == 0 {
                    return bad("synthetic", "need at least one image");
                }
                if *height < self.model.patch || *width < self.model.patch {
                    return bad("synthetic_height", "images smaller than the patch");
                }
                if height % self.model.scale != 0 || width % self.model.scale != 0 {
                    return bad("synthetic_height", "image size must be divisible by scale");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Resolved configuration in the same `key = value` form it is read from.
    pub fn to_text(&self) -> String {
        let mut m = BTreeMap::new();
        self.model.to_meta(&mut m);
        let mut s = String::new();
        for (k, v) in &m {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "lambda_guide = {}", self.lambda_guide);
        let _ = writeln!(s, "lambda_bpp = {}", self.lambda_bpp);
        let _ = writeln!(s, "quality = {}", self.quality);
        let _ = writeln!(s, "quant = {}", self.quant.name());
        let _ = writeln!(s, "fov_choices = {}", join(&self.fov_choices_deg));
        let _ = writeln!(s, "res_choices = {}", join(&self.res_choices));
        let _ = writeln!(s, "independent_fov = {}", self.independent_fov);
        let _ = writeln!(s, "log_every = {}", self.log_every);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        match &self.data {
            DataSource::Files(f) => {
                let _ = writeln!(s, "data = {}", f.join(","));
            }
            DataSource::Synthetic { count, height, width } => {
                let _ = writeln!(s, "synthetic = {count}");
                let _ = writeln!(s, "synthetic_height = {height}");
                let _ = writeln!(s, "synthetic_width = {width}");
            }
        }
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        s
    }
}
