//! Oracle suites: each compares a fast path against an independent slow
//! reference and reports pass/fail lines.

use std::sync::Arc;

use panoview_codec::QuantTables;
use panoview_core::geometry::{inverse_map_sphere, ViewportCoord, ViewportSpec};
use panoview_core::oracle::{dense_bicubic_downscale, metric_derivatives, rel_err, roundtrip_max_error};
use panoview_core::resample::{bicubic_downscale, bicubic_downscale_erp};
use panoview_core::ssr::{shape_at, SsrOptions};
use panoview_core::synth;
use panoview_model::config::DataSource;
use panoview_model::downsampler::BicubicDown;
use panoview_model::losses::LossWeights;
use panoview_model::train::{config_synthetic_data, draw_example, example_loss};
use panoview_model::{DescriptorMode, Model, ModelConfig, QuantRelax, TrainConfig};
use panoview_nn::gradcheck::gradcheck;
use panoview_nn::{Graph, Padding, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Check {
    Roundtrip,
    SsrFd,
    Downscale,
    Gradcheck,
}

pub struct Line {
    pub pass: bool,
    pub name: String,
    pub detail: String,
}

fn line(pass: bool, name: &str, detail: String) -> Line {
    Line {
        pass,
        name: name.to_string(),
        detail,
    }
}

pub fn run(check: Check, seed: u64) -> anyhow::Result<Vec<Line>> {
    Ok(match check {
        Check::Roundtrip => roundtrip(seed),
        Check::SsrFd => ssr_fd(seed),
        Check::Downscale => downscale(seed)?,
        Check::Gradcheck => gradchecks(seed)?,
    })
}

fn roundtrip(seed: u64) -> Vec<Line> {
    let err = roundtrip_max_error(20, 128, seed);
    vec![line(err < 1e-9, "viewport roundtrip", format!("max error {err:.2e} over 20 specs (< 1e-9)"))]
}

/// Viewports of 64 to 256 pixels per side.
fn ssr_fd(seed: u64) -> Vec<Line> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut jac, mut hess) = (0.0f64, 0.0f64);
    let mut n = 0;
    while n < 200 {
        let spec = ViewportSpec::from_degrees(
            rng.random_range(-75.0..75.0),
            rng.random_range(-180.0..180.0),
            rng.random_range(60.0..120.0),
            rng.random_range(60.0..120.0),
            rng.random_range(64..256),
            rng.random_range(64..256),
        )
        .expect("valid spec");
        let y = ViewportCoord::new(
            rng.random_range(0..spec.width) as f64,
            rng.random_range(0..spec.height) as f64,
        );
        if inverse_map_sphere(&spec, y).theta.abs() > 75f64.to_radians() {
            continue;
        }
        let est = shape_at(&spec, y, 2048, 4096, SsrOptions::default()).flat();
        let truth = metric_derivatives(&spec, y);
        jac = jac.max(rel_err(&est[..4], &truth[..4]));
        hess = hess.max(rel_err(&est[4..], &truth[4..]));
        n += 1;
    }
    vec![
        line(jac < 1e-3, "ssr jacobian", format!("max rel error {jac:.2e} over 200 points (< 1e-3)")),
        line(hess < 1e-2, "ssr hessian", format!("max rel error {hess:.2e} over 200 points (< 1e-2)")),
    ]
}

fn downscale(seed: u64) -> anyhow::Result<Vec<Line>> {
    let img = synth::textured_panorama(48, 96, seed);
    let mut out = Vec::new();
    for s in [2, 4] {
        for wrap in [false, true] {
            let fast = if wrap {
                bicubic_downscale_erp(&img, s)?
            } else {
                bicubic_downscale(&img, s)?
            };
            let dense = dense_bicubic_downscale(&img, s, wrap);
            let err = fast.data().iter().zip(dense.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let name = format!("bicubic downscale x{s}{}", if wrap { " wrapped" } else { "" });
            out.push(line(err < 1e-12, &name, format!("max error {err:.2e} (< 1e-12)")));
        }
    }
    Ok(out)
}

fn project(g: &mut Graph, v: Var) -> panoview_nn::Result<Var> {
    let shape = g.shape(v).to_vec();
    let n: usize = shape.iter().product();
    let w = g.constant(Tensor::new(&shape, (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect())?);
    let m = g.mul(v, w)?;
    Ok(g.sum(m))
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> anyhow::Result<Tensor> {
    let n: usize = shape.iter().product();
    Ok(Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?)
}

fn gradchecks(seed: u64) -> anyhow::Result<Vec<Line>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (stride, pad) in [(1, Padding::Zero), (2, Padding::WrapWidth)] {
        let inputs = vec![
            random_tensor(&mut rng, &[2, 6, 8])?,
            random_tensor(&mut rng, &[3, 2, 3, 3])?,
            random_tensor(&mut rng, &[3])?,
        ];
        let r = gradcheck(&inputs, 1e-6, |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
            project(g, y)
        })?;
        let e = r.max_rel_error();
        out.push(line(e < 1e-4, &format!("conv2d stride {stride}"), format!("max rel error {e:.2e} (< 1e-4)")));
    }
    let r = gradcheck(&[random_tensor(&mut rng, &[3, 8, 16])?], 1e-6, |g, v| {
        let y = g.custom(Arc::new(BicubicDown { scale: 2, wrap: true }), &[v[0]])?;
        project(g, y)
    })?;
    let e = r.max_rel_error();
    out.push(line(e < 1e-4, "bicubic downscale op", format!("max rel error {e:.2e} (< 1e-4)")));

    let cfg = ModelConfig {
        scale: 2,
        patch: 16,
        channels: 4,
        down_channels: 4,
        freqs: 4,
        hidden: 8,
        descriptor: DescriptorMode::Spherical,
    };
    let mut tc = TrainConfig::desk();
    tc.model = cfg.clone();
    tc.seed = seed;
    tc.samples = 48;
    tc.quant = QuantRelax::Noise;
    tc.res_choices = vec![16, 24];
    tc.data = DataSource::Synthetic {
        count: 1,
        height: 32,
        width: 64,
    };
    let data = config_synthetic_data(&tc).expect("synthetic source");
    let ex = draw_example(&tc, &data, &mut rng)?;
    let mut model = Model::init(&cfg, seed)?;
    *model.params.get_mut(panoview_model::model::RATE_PARAM)? = Tensor::full(&[2, 64], 1.5);
    let tables = QuantTables::from_quality(75.0);
    let inputs: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let r = gradcheck(&inputs, 1e-6, |g, v| {
        let p = model.params.bind_vars(v)?;
        let l = example_loss(g, &p, &cfg, &ex, &tables, LossWeights::default())
            .map_err(|e| panoview_nn::NnError::ShapeMismatch {
                op: "loss",
                detail: e.to_string(),
            })?;
        Ok(l.total)
    })?;
    let e = r.max_rel_error();
    out.push(line(
        e < 1e-3,
        "end-to-end loss 16x16",
        format!("max rel error {e:.2e} over {} tensors (< 1e-3)", inputs.len()),
    ));
    Ok(out)
}
