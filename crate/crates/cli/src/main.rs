//! `panoview`: downscale and compress panoramas, render viewports, train and
//! evaluate models, and run the numerical oracles.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod io;
mod oracle;

use std::fmt::Display;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use panoview_codec::{encode, fit_quant_tables, QuantTables};
use panoview_core::geometry::ViewportCoord;
use panoview_core::resample::{bicubic_downscale_erp, render_viewport_baseline, Kernel};
use panoview_core::ssr::{shape_2d_baseline, shape_at, SsrOptions};
use panoview_core::{Image, ViewportSpec};
use panoview_model::config::DataSource;
use panoview_model::pipeline::{evaluate, ViewSettings, EVAL_DIRECTIONS_DEG};
use panoview_model::train::{config_synthetic_data, LOG_HEADER};
use panoview_model::{ModelError, TrainConfig, Trainer};

pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

pub fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Configuration problems are usage errors; everything else is a runtime
/// failure.
fn model_err(e: ModelError) -> Failure {
    match e {
        ModelError::Config(_) => usage(e),
        other => Failure::Runtime(other.into()),
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "panoview", version, about = "Panorama downscaling, compression and viewport rendering")]
struct Cli {
    /// Default seed for commands that draw random numbers.
    #[arg(long, global = true, env = "PANOVIEW_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Downscale an ERP panorama and compress it to JPEG.
    Downscale(DownscaleArgs),
    /// Render a perspective viewport from a compressed LR panorama.
    Render(RenderArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Score a model against the bicubic/bilinear baseline.
    Eval(EvalArgs),
    /// Print the shape descriptor of one viewport pixel.
    ProbeSsr(ProbeArgs),
    /// Run an oracle suite; exits 0 iff every check passes.
    Oracle {
        #[arg(long, value_enum)]
        check: oracle::Check,
    },
}

#[derive(Args)]
struct DownscaleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Trained checkpoint; its scale is used when `--scale` is absent.
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    model: Option<PathBuf>,
    /// Bicubic downscaling instead of a learned model.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    scale: Option<usize>,
    /// Bits per HR pixel to fit the quantization tables to.
    #[arg(long, conflicts_with = "quality")]
    target_bpp: Option<f64>,
    /// Fixed table quality instead of a rate target.
    #[arg(long)]
    quality: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKernel {
    Bilinear,
    Bicubic,
}

#[derive(Args)]
struct ViewArgs {
    /// Latitude of the view center in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta: f64,
    /// Longitude of the view center in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    phi: f64,
    #[arg(long, default_value_t = 90.0)]
    fov_h: f64,
    #[arg(long, default_value_t = 90.0)]
    fov_v: f64,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
}

impl ViewArgs {
    fn spec(&self) -> Result<ViewportSpec, Failure> {
        ViewportSpec::from_degrees(self.theta, self.phi, self.fov_h, self.fov_v, self.height, self.width)
            .map_err(usage)
    }

    fn print(&self) {
        println!("theta = {}", self.theta);
        println!("phi = {}", self.phi);
        println!("fov_h = {}", self.fov_h);
        println!("fov_v = {}", self.fov_v);
        println!("width = {}", self.width);
        println!("height = {}", self.height);
    }
}

#[derive(Args)]
struct RenderArgs {
    /// Compressed LR panorama (JPEG) or any supported image.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    model: Option<PathBuf>,
    /// Interpolate the LR panorama directly with this kernel.
    #[arg(long, value_enum)]
    baseline: Option<BaselineKernel>,
    #[command(flatten)]
    view: ViewArgs,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the full-size preset instead of the desk preset.
    #[arg(long)]
    paper_scale: bool,
    /// Overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self, seed: u64) -> Result<TrainConfig, Failure> {
        let mut cfg = if self.paper_scale {
            TrainConfig::full_scale()
        } else {
            TrainConfig::desk()
        };
        cfg.seed = seed;
        if let Some(path) = &self.config {
            io::require_file(path)?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).map_err(model_err)?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| usage(anyhow!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim()).map_err(model_err)?;
        }
        cfg.validate().map_err(model_err)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Validate and print the configuration, then exit.
    #[arg(long)]
    dry_run: bool,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Defaults to `<out_dir>/model.ckpt`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// HR panoramas to evaluate; defaults to the config's data.
    #[arg(long = "in")]
    inputs: Vec<PathBuf>,
    /// Table quality for both pipelines; defaults to the config's quality.
    #[arg(long)]
    quality: Option<f64>,
    #[arg(long, default_value_t = 90.0)]
    fov_h: f64,
    #[arg(long, default_value_t = 90.0)]
    fov_v: f64,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    /// Defaults to `<out_dir>/eval.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    view: ViewArgs,
    /// Pixel column.
    #[arg(long)]
    u: f64,
    /// Pixel row.
    #[arg(long)]
    v: f64,
    /// ERP raster the stencil is measured in.
    #[arg(long, default_value_t = 2048)]
    erp_height: usize,
    #[arg(long, default_value_t = 4096)]
    erp_width: usize,
    /// Print the planar ERP-difference variant as well.
    #[arg(long)]
    planar: bool,
}

fn print_kv(key: &str, value: impl Display) {
    println!("{key} = {value}");
}

fn downscale(seed: u64, a: &DownscaleArgs) -> CmdResult {
    let hr = io::read_image(&a.input)?;
    let model = a.model.as_deref().map(io::load_model).transpose()?;
    let scale = match (&model, a.scale) {
        (Some(m), Some(s)) if s != m.cfg.scale => {
            return Err(usage(anyhow!("--scale {s} differs from the model's scale {}", m.cfg.scale)))
        }
        (Some(m), _) => m.cfg.scale,
        (None, s) => s.unwrap_or(2),
    };
    let target = a.target_bpp.or(if a.quality.is_none() { Some(0.3) } else { None });
    print_kv("in", a.input.display());
    print_kv("out", a.out.display());
    print_kv("mode", if model.is_some() { "learned" } else { "bicubic" });
    print_kv("scale", scale);
    match (target, a.quality) {
        (Some(t), _) => print_kv("target_bpp", t),
        (_, Some(q)) => print_kv("quality", q),
        _ => {}
    }
    print_kv("seed", seed);
    if hr.height() % scale != 0 || hr.width() % scale != 0 {
        return Err(usage(anyhow!("image size {}x{} is not divisible by scale {scale}", hr.height(), hr.width())));
    }
    let lr = match &model {
        Some(m) => m.downscale(&hr).map_err(model_err)?,
        None => bicubic_downscale_erp(&hr, scale).map_err(usage)?,
    };
    let (bytes, quality) = match (target, a.quality) {
        (Some(t), _) => {
            let fit = fit_quant_tables(&lr, hr.height(), hr.width(), t)?;
            (fit.encoded.bytes, fit.tables.quality)
        }
        (None, Some(q)) => (encode(&lr, &QuantTables::from_quality(q))?.bytes, Some(q)),
        (None, None) => unreachable!("a target is always set without --quality"),
    };
    io::write_file(&a.out, &bytes)?;
    let bpp = panoview_codec::bpp_real(bytes.len(), hr.height(), hr.width());
    println!(
        "wrote {} ({}x{}, {} bytes, quality {}, {bpp:.4} bpp)",
        a.out.display(),
        lr.height(),
        lr.width(),
        bytes.len(),
        quality.map_or("-".to_string(), |q| format!("{q:.2}"))
    );
    Ok(())
}

fn render(a: &RenderArgs) -> CmdResult {
    print_kv("in", a.input.display());
    print_kv("out", a.out.display());
    match (&a.model, a.baseline) {
        (Some(m), _) => print_kv("model", m.display()),
        (None, Some(k)) => print_kv("baseline", k.to_possible_value().expect("named").get_name().to_string()),
        _ => {}
    }
    a.view.print();
    let spec = a.view.spec()?;
    let lr = io::read_image(&a.input)?;
    let view = match (&a.model, a.baseline) {
        (Some(path), _) => {
            let model = io::load_model(path)?;
            let lat = model.encode_image(&lr).map_err(model_err)?;
            model.render_viewport(&lat, &spec).map_err(model_err)?
        }
        (None, Some(k)) => {
            let kernel = match k {
                BaselineKernel::Bilinear => Kernel::Bilinear,
                BaselineKernel::Bicubic => Kernel::Bicubic,
            };
            render_viewport_baseline(&lr, &spec, kernel).clamp01()
        }
        (None, None) => return Err(usage(anyhow!("pass --model or --baseline"))),
    };
    io::write_image(&a.out, &view)?;
    println!("wrote {} ({}x{})", a.out.display(), view.width(), view.height());
    Ok(())
}

fn load_data(cfg: &TrainConfig, inputs: &[PathBuf]) -> Result<Vec<Image>, Failure> {
    if !inputs.is_empty() {
        return inputs.iter().map(|p| io::read_image(p)).collect();
    }
    match &cfg.data {
        DataSource::Files(files) => files.iter().map(|f| io::read_image(Path::new(f))).collect(),
        DataSource::Synthetic { .. } => Ok(config_synthetic_data(cfg).expect("synthetic source")),
    }
}

fn train(a: &TrainArgs, seed: u64) -> CmdResult {
    let cfg = a.config.resolve(seed)?;
    print!("{}", cfg.to_text());
    if a.dry_run {
        println!("config ok");
        return Ok(());
    }
    let data = load_data(&cfg, &[])?;
    let out = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = io::load_checkpoint(path)?;
            Trainer::resume(cfg.clone(), data, &ck).map_err(model_err)?
        }
        None => Trainer::new(cfg.clone(), data).map_err(model_err)?,
    };
    io::write_file(&out.join("config.txt"), cfg.to_text().as_bytes())?;
    let log_path = out.join("log.csv");
    let mut log = if a.resume.is_some() && log_path.exists() {
        OpenOptions::new().append(true).open(&log_path)?
    } else {
        let mut f = std::fs::File::create(&log_path)?;
        writeln!(f, "{LOG_HEADER}")?;
        f
    };
    let ck_path = out.join("checkpoint.ckpt");
    let mut write_err: Option<anyhow::Error> = None;
    trainer
        .run(|t, row| {
            let mut step = || -> anyhow::Result<()> {
                writeln!(log, "{}", row.csv())?;
                if cfg.log_every > 0 && row.iter % cfg.log_every == 0 {
                    println!(
                        "iter {:>6}  loss {:.5}  pix {:.5}  guide {:.5}  bpp {:.4}",
                        row.iter, row.loss, row.parts.pix, row.parts.guide, row.parts.bpp
                    );
                }
                if cfg.checkpoint_every > 0 && row.iter % cfg.checkpoint_every == 0 {
                    t.checkpoint()?.save(&ck_path)?;
                }
                Ok(())
            };
            if let Err(e) = step() {
                write_err = Some(e);
                return Err(ModelError::Io(std::io::Error::other("write failed")));
            }
            Ok(())
        })
        .map_err(|e| write_err.take().map_or_else(|| model_err(e), Failure::Runtime))?;
    let ck = trainer.checkpoint().map_err(model_err)?;
    ck.save(&ck_path)?;
    ck.save(&out.join("model.ckpt"))?;
    println!("finished at iteration {}; model in {}", trainer.iteration(), out.join("model.ckpt").display());
    Ok(())
}

fn eval(a: &EvalArgs, seed: u64) -> CmdResult {
    let cfg = a.config.resolve(seed)?;
    let model_path = a.model.clone().unwrap_or_else(|| Path::new(&cfg.out_dir).join("model.ckpt"));
    let out = a.out.clone().unwrap_or_else(|| Path::new(&cfg.out_dir).join("eval.csv"));
    let quality = a.quality.unwrap_or(cfg.quality);
    let view = ViewSettings {
        fov_h_deg: a.fov_h,
        fov_v_deg: a.fov_v,
        height: a.height,
        width: a.width,
    };
    print!("{}", cfg.to_text());
    print_kv("model", model_path.display());
    print_kv("eval_quality", quality);
    print_kv("eval_fov_h", a.fov_h);
    print_kv("eval_fov_v", a.fov_v);
    print_kv("eval_width", a.width);
    print_kv("eval_height", a.height);
    print_kv("eval_out", out.display());
    view.spec(0.0, 0.0).map_err(usage)?;
    if !(1.0..=100.0).contains(&quality) {
        return Err(usage(anyhow!("quality must lie in [1, 100]")));
    }
    if a.dry_run {
        println!("config ok");
        return Ok(());
    }
    let model = io::load_model(&model_path)?;
    let images = load_data(&cfg, &a.inputs)?;
    let report = evaluate(&model, &images, &EVAL_DIRECTIONS_DEG, view, &QuantTables::from_quality(quality))
        .map_err(model_err)?;
    io::write_file(&out, report.csv().as_bytes())?;
    let m = report.mean();
    println!(
        "{} views: psnr {:.3} ssim {:.4} | baseline psnr {:.3} ssim {:.4}",
        report.rows.len(),
        m[0],
        m[1],
        m[2],
        m[3]
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn probe(a: &ProbeArgs) -> CmdResult {
    a.view.print();
    print_kv("u", a.u);
    print_kv("v", a.v);
    print_kv("erp_height", a.erp_height);
    print_kv("erp_width", a.erp_width);
    let spec = a.view.spec()?;
    let y = ViewportCoord::new(a.u, a.v);
    let names = [
        "dphi_du", "dtheta_du", "dphi_dv", "dtheta_dv", "dphi_uu", "dphi_uv", "dphi_vv", "dtheta_uu", "dtheta_uv",
        "dtheta_vv",
    ];
    let show = |label: &str, d: [f64; 10]| {
        let cells: Vec<String> = names.iter().zip(d).map(|(n, v)| format!("{n}={v:.6}")).collect();
        println!("{label}: {}", cells.join(" "));
    };
    show("spherical", shape_at(&spec, y, a.erp_height, a.erp_width, SsrOptions::default()).flat());
    if a.planar {
        show("planar", shape_2d_baseline(&spec, y, a.erp_height, a.erp_width, true).flat());
    }
    Ok(())
}

fn run_oracle(check: oracle::Check, seed: u64) -> CmdResult {
    let name = check.to_possible_value().expect("named").get_name().to_string();
    print_kv("check", &name);
    print_kv("seed", seed);
    let lines = oracle::run(check, seed)?;
    let failed = lines.iter().filter(|l| !l.pass).count();
    for l in &lines {
        println!("[{}] {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!("{failed} of {} checks failed", lines.len())));
    }
    println!("{name}: all {} checks passed", lines.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Downscale(a) => downscale(cli.seed, a),
        Command::Render(a) => render(a),
        Command::Train(a) => train(a, cli.seed),
        Command::Eval(a) => eval(a, cli.seed),
        Command::ProbeSsr(a) => probe(a),
        Command::Oracle { check } => run_oracle(*check, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
