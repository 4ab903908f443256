use std::io::Cursor;

use panoview_codec::QuantTables;
use panoview_core::metrics::PSNR_CAP_DB;
use panoview_core::synth;
use panoview_model::config::DataSource;
use panoview_model::losses::{
    graph_loss_guide, graph_loss_pix, loss_guide, loss_pix, loss_total, LossParts, LossWeights,
};
use panoview_model::pipeline::{evaluate, ground_truth, EvalReport, ViewSettings};
use panoview_model::train::{
    config_synthetic_data, draw_example, example_loss, moving_average, Example,
};
use panoview_model::{DescriptorMode, Model, ModelConfig, QuantRelax, TrainConfig, Trainer};
use panoview_nn::gradcheck::gradcheck;
use panoview_nn::{Checkpoint, Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_model() -> ModelConfig {
    ModelConfig {
        scale: 2,
        patch: 16,
        channels: 4,
        down_channels: 4,
        freqs: 4,
        hidden: 8,
        descriptor: DescriptorMode::Spherical,
    }
}

fn tiny_train() -> TrainConfig {
    let mut c = TrainConfig::desk();
    c.model = tiny_model();
    c.samples = 48;
    c.iterations = 4;
    c.batch = 2;
    c.res_choices = vec![16, 24];
    c.data = DataSource::Synthetic {
        count: 2,
        height: 32,
        width: 64,
    };
    c
}

fn toy_example(quant: QuantRelax) -> Example {
    let mut cfg = tiny_train();
    cfg.quant = quant;
    let data = config_synthetic_data(&cfg).unwrap();
    draw_example(&cfg, &data, &mut ChaCha8Rng::seed_from_u64(77)).unwrap()
}

#[test]
fn end_to_end_gradcheck_on_a_16x16_patch() {
    let cfg = tiny_model();
    let mut model = Model::init(&cfg, 3).unwrap();
    *model.params.get_mut("rate.log_scale").unwrap() = Tensor::full(&[2, 64], 1.5);
    let ex = toy_example(QuantRelax::Noise);
    assert_eq!(ex.draw.hr_patch.height(), 16);
    let tables = QuantTables::from_quality(75.0);
    let inputs: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let r = gradcheck(&inputs, 1e-6, |g, v| {
        let p = model.params.bind_vars(v)?;
        Ok(example_loss(g, &p, &cfg, &ex, &tables, LossWeights::default()).unwrap().total)
    })
    .unwrap();
    for (name, e) in model.params.names().iter().zip(&r.rel_errors) {
        assert!(*e < 1e-3, "{name}: {e}");
    }
    let first = model.params.names().iter().position(|n| n == "down.in.w").unwrap();
    assert!(r.rel_errors[first] < 1e-3);
}

#[test]
fn pixel_loss_alone_reaches_the_downsampler() {
    let cfg = tiny_model();
    let model = Model::init(&cfg, 4).unwrap();
    let ex = toy_example(QuantRelax::StraightThrough);
    let mut g = Graph::new();
    let p = model.params.bind(&mut g);
    let w = LossWeights { guide: 0.0, bpp: 0.0 };
    let l = example_loss(&mut g, &p, &cfg, &ex, &QuantTables::from_quality(75.0), w).unwrap();
    let grads = g.backward(l.total).unwrap();
    let gs = p.grads(&model.params, &grads);
    for (name, gr) in model.params.names().iter().zip(&gs) {
        if name.starts_with("down.") {
            assert!(gr.norm() > 0.0, "{name}");
        }
        if name == "rate.log_scale" {
            assert_eq!(gr.norm(), 0.0);
        }
    }
}

#[test]
fn total_loss_decomposes_exactly() {
    let cfg = tiny_model();
    let model = Model::init(&cfg, 5).unwrap();
    let ex = toy_example(QuantRelax::StraightThrough);
    let mut g = Graph::new();
    let p = model.params.bind(&mut g);
    let w = LossWeights { guide: 0.6, bpp: 0.01 };
    let l = example_loss(&mut g, &p, &cfg, &ex, &QuantTables::from_quality(75.0), w).unwrap();
    let v = |x| g.value(x).item();
    let parts = LossParts {
        pix: v(l.pix),
        guide: v(l.guide),
        bpp: v(l.bpp),
    };
    assert!((v(l.total) - loss_total(parts, w)).abs() <= 1e-15 * v(l.total).abs().max(1.0));
    assert!(parts.bpp > 0.0 && parts.guide >= 0.0 && parts.pix > 0.0);
}

#[test]
fn graph_losses_match_loop_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 37;
    let pred: Vec<[f64; 3]> = (0..n).map(|_| [0; 3].map(|_| rng.random())).collect();
    let target: Vec<[f64; 3]> = (0..n).map(|_| [0; 3].map(|_| rng.random())).collect();
    let mut brute = 0.0;
    for i in 0..n {
        for c in 0..3 {
            brute += (pred[i][c] - target[i][c]).abs();
        }
    }
    let mut g = Graph::new();
    let pv = g.constant(Tensor::new(&[n, 3], pred.iter().flatten().copied().collect()).unwrap());
    let lp = graph_loss_pix(&mut g, pv, &target).unwrap();
    assert!((g.value(lp).item() - brute / n as f64).abs() < 1e-14);
    assert!((loss_pix(&pred, &target).unwrap() - brute / n as f64).abs() < 1e-14);

    let a = synth::noise_image(8, 8, 1);
    let b = synth::noise_image(8, 8, 2);
    let mut sq = 0.0;
    for c in 0..3 {
        for y in 0..8 {
            for x in 0..8 {
                sq += (a.get(c, y, x) - b.get(c, y, x)).powi(2);
            }
        }
    }
    let av = g.constant(Tensor::new(&[3, 8, 8], a.data().to_vec()).unwrap());
    let lg = graph_loss_guide(&mut g, av, &b, 16, 2).unwrap();
    assert!((g.value(lg).item() - sq / 64.0).abs() < 1e-14);
    assert!((loss_guide(&a, &b, 16, 2).unwrap() - sq / 64.0).abs() < 1e-14);
    assert!(graph_loss_guide(&mut g, av, &b, 32, 2).is_err());
}

fn tiny_data(cfg: &TrainConfig) -> Vec<panoview_core::Image> {
    config_synthetic_data(cfg).unwrap()
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let mut cfg = tiny_train();
    cfg.lr = 0.0;
    let mut t = Trainer::new(cfg.clone(), tiny_data(&cfg)).unwrap();
    let before = t.model().params.clone();
    let log = t.run(|_, _| Ok(())).unwrap();
    assert_eq!(log.len(), 4);
    assert_eq!(t.model().params, before);
}

#[test]
fn training_is_deterministic_and_resumes_bit_identically() {
    let cfg = tiny_train();
    let data = tiny_data(&cfg);
    let mut full = Trainer::new(cfg.clone(), data.clone()).unwrap();
    let log_full = full.run(|_, _| Ok(())).unwrap();

    let mut again = Trainer::new(cfg.clone(), data.clone()).unwrap();
    again.run(|_, _| Ok(())).unwrap();
    assert_eq!(again.checkpoint().unwrap(), full.checkpoint().unwrap());

    let mut half_cfg = cfg.clone();
    half_cfg.iterations = 2;
    let mut first = Trainer::new(half_cfg, data.clone()).unwrap();
    let log_a = first.run(|_, _| Ok(())).unwrap();
    let mut bytes = Vec::new();
    first.checkpoint().unwrap().write_to(&mut bytes).unwrap();
    let ck = Checkpoint::read_from(&mut Cursor::new(bytes)).unwrap();
    let mut second = Trainer::resume(cfg.clone(), data, &ck).unwrap();
    assert_eq!(second.iteration(), 2);
    let log_b = second.run(|_, _| Ok(())).unwrap();
    let joined: Vec<_> = log_a.into_iter().chain(log_b).collect();
    assert_eq!(joined, log_full);
    assert_eq!(second.checkpoint().unwrap(), full.checkpoint().unwrap());
}

#[test]
fn resume_rejects_mismatched_config() {
    let cfg = tiny_train();
    let data = tiny_data(&cfg);
    let t = Trainer::new(cfg.clone(), data.clone()).unwrap();
    let ck = t.checkpoint().unwrap();
    let mut other = cfg.clone();
    other.model.freqs = 8;
    assert!(Trainer::resume(other, data.clone(), &ck).is_err());
    let mut other = cfg;
    other.seed = 99;
    assert!(Trainer::resume(other, data, &ck).is_err());
}

#[test]
fn model_checkpoint_file_roundtrip() {
    let model = Model::init(&tiny_model(), 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pvck");
    model.to_checkpoint(8, &Default::default()).save(&path).unwrap();
    let back = Model::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(back, model);
}

#[test]
fn evaluation_rows_and_means() {
    let model = Model::init(&tiny_model(), 1).unwrap();
    let hr = synth::panorama(32, 64, 2);
    let view = ViewSettings {
        fov_h_deg: 90.0,
        fov_v_deg: 90.0,
        height: 16,
        width: 16,
    };
    let dirs = [(0.0, 0.0), (45.0, 180.0), (-90.0, 0.0)];
    let rep = evaluate(&model, &[hr.clone()], &dirs, view, &QuantTables::from_quality(90.0)).unwrap();
    assert_eq!(rep.rows.len(), 3);
    assert_eq!(rep.csv().lines().count(), 4);
    let one = EvalReport {
        rows: vec![rep.rows[1]],
        bpp: rep.bpp.clone(),
    };
    let r = rep.rows[1];
    assert_eq!(one.mean(), [r.psnr, r.ssim, r.baseline_psnr, r.baseline_ssim]);
    let gt = ground_truth(&hr, &view.spec(0.0, 0.0).unwrap());
    assert_eq!(panoview_core::metrics::psnr(&gt, &gt).unwrap(), PSNR_CAP_DB);
}

#[test]
fn moving_average_is_trailing() {
    assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
}
