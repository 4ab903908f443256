use std::f64::consts::TAU;
use std::sync::Arc;

use panoview_core::geometry::{ViewportCoord, ViewportSpec};
use panoview_core::resample::{bicubic_downscale, render_viewport_baseline, Kernel};
use panoview_core::{synth, Image};
use panoview_model::downsampler::{downsample, BicubicDown};
use panoview_model::model::{Model, DESCRIPTOR_LEN};
use panoview_model::vr::{encode, neighbors, predict, QueryBatch};
use panoview_model::{DescriptorMode, ModelConfig};
use panoview_nn::gradcheck::gradcheck;
use panoview_nn::{Graph, Padding, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> ModelConfig {
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

fn tensor(img: &Image) -> Tensor {
    Tensor::new(&[3, img.height(), img.width()], img.data().to_vec()).unwrap()
}

fn random_spec(rng: &mut ChaCha8Rng) -> ViewportSpec {
    ViewportSpec::from_degrees(
        rng.random_range(-89.0..89.0),
        rng.random_range(-180.0..180.0),
        rng.random_range(60.0..120.0),
        rng.random_range(60.0..120.0),
        rng.random_range(8..24),
        rng.random_range(8..24),
    )
    .unwrap()
}

#[test]
fn zero_decoder_reproduces_bilinear_skip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..10 {
        let mut model = Model::init(&tiny(), i).unwrap();
        model.zero_decoder().unwrap();
        let lr = synth::panorama(32, 64, 100 + i);
        let lat = model.encode_image(&lr).unwrap();
        let spec = random_spec(&mut rng);
        let out = model.render_viewport(&lat, &spec).unwrap();
        let base = render_viewport_baseline(&lr, &spec, Kernel::Bilinear);
        assert_eq!(out, base, "fixture {i}");
    }
}

#[test]
fn viewport_matches_per_pixel_loop() {
    let model = Model::init(&tiny(), 9).unwrap();
    let lr = synth::panorama(16, 32, 3);
    let lat = model.encode_image(&lr).unwrap();
    let spec = ViewportSpec::from_degrees(30.0, 170.0, 100.0, 80.0, 12, 14).unwrap();
    let out = model.render_viewport(&lat, &spec).unwrap();
    assert_eq!((out.height(), out.width()), (12, 14));
    for v in 0..12 {
        for u in 0..14 {
            let px = model
                .render_pixel(&lat, &spec, ViewportCoord::new(u as f64, v as f64))
                .unwrap();
            for c in 0..3 {
                assert!((px[c] - out.get(c, v, u)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn seam_rendering_is_roll_equivariant() {
    let model = Model::init(&tiny(), 2).unwrap();
    let lr = synth::panorama(32, 64, 8);
    let spec = ViewportSpec::from_degrees(10.0, 179.0, 90.0, 90.0, 24, 24).unwrap();
    let k = 21;
    let rolled = lr.roll_columns(k);
    let shifted = spec.with_phi_shift(-(k as f64) * TAU / 64.0);
    let a = model.render_viewport(&model.encode_image(&lr).unwrap(), &spec).unwrap();
    let b = model
        .render_viewport(&model.encode_image(&rolled).unwrap(), &shifted)
        .unwrap();
    let d = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d < 1e-6, "learned {d}");
    let a = render_viewport_baseline(&lr, &spec, Kernel::Bilinear);
    let b = render_viewport_baseline(&rolled, &shifted, Kernel::Bilinear);
    let d = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d < 1e-6, "baseline {d}");
}

#[test]
fn panorama_downscale_commutes_with_even_rolls() {
    let model = Model::init(&tiny(), 5).unwrap();
    let hr = synth::panorama(32, 64, 6);
    let a = model.downscale(&hr).unwrap().roll_columns(7);
    let b = model.downscale(&hr.roll_columns(14)).unwrap();
    let d = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d < 1e-12, "{d}");
}

#[test]
fn cell_center_query_takes_its_own_cell() {
    let n = neighbors(8, 16, 5.0, 3.0, true, 0.25);
    assert_eq!(n[0].index, 3 * 16 + 5);
    assert_eq!(n[0].weight, 1.0);
    assert_eq!(n[0].delta, [0.0, 0.0]);
    assert!(n[1..].iter().all(|t| t.weight == 0.0));
}

#[test]
fn neighbors_wrap_across_the_seam() {
    let n = neighbors(8, 16, 15.7, 2.5, true, 1.0);
    let cols: Vec<usize> = n.iter().map(|t| t.index % 16).collect();
    assert_eq!(cols, vec![15, 0, 15, 0]);
    assert!((n[1].delta[0] + 0.3).abs() < 1e-12);
    let m = neighbors(8, 16, -0.3, 2.5, true, 1.0);
    for (a, b) in n.iter().zip(&m) {
        assert_eq!(a.index, b.index);
        assert!((a.weight - b.weight).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn ensemble_weights_are_convex(x in -2.0f64..18.0, y in -2.0f64..10.0, wrap: bool, snap: bool) {
        let (x, y) = if snap { (x.round(), y.round()) } else { (x, y) };
        let n = neighbors(8, 16, x, y, wrap, 0.5);
        let sum: f64 = n.iter().map(|t| t.weight).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(n.iter().all(|t| t.weight >= 0.0 && t.index < 128));
    }
}

/// Random queries on an `h × w` grid with random descriptors.
fn random_batch(rng: &mut ChaCha8Rng, h: usize, w: usize, q: usize, wrap: bool) -> QueryBatch {
    let neigh: Vec<_> = (0..q)
        .map(|_| {
            let x = rng.random_range(-0.5..w as f64 - 0.5);
            let y = rng.random_range(-0.5..h as f64 - 0.5);
            neighbors(h, w, x, y, wrap, 0.5)
        })
        .collect();
    let desc: Vec<[f64; 10]> = (0..q)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    QueryBatch::new(&neigh, &desc)
}

#[test]
fn full_renderer_gradcheck_covers_every_parameter_and_input() {
    let cfg = tiny();
    let model = Model::init(&cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let hr = synth::noise_image(8, 8, 13);
    let batch = random_batch(&mut rng, 4, 4, 6, false);
    let mut inputs: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    inputs.push(tensor(&hr));
    let n = model.params.len();
    let r = gradcheck(&inputs, 1e-6, |g, v| {
        let p = model.params.bind_vars(&v[..n])?;
        let lr = downsample(g, &p, &cfg, v[n], Padding::Zero).unwrap();
        let z = encode(g, &p, lr, Padding::Zero).unwrap();
        let out = predict(g, &p, z, lr, &batch).unwrap();
        let sq = g.square(out);
        Ok(g.sum(sq))
    })
    .unwrap();
    let names: Vec<&str> = model.params.names().iter().map(String::as_str).collect();
    for (i, e) in r.rel_errors.iter().enumerate() {
        let name = names.get(i).copied().unwrap_or("hr input");
        assert!(*e < 1e-4, "{name}: {e}");
    }
}

#[test]
fn gradients_reach_encoder_and_downsampler() {
    let cfg = tiny();
    let model = Model::init(&cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = random_batch(&mut rng, 8, 8, 32, false);
    let mut g = Graph::new();
    let p = model.params.bind(&mut g);
    let x = g.constant(tensor(&synth::noise_image(16, 16, 3)));
    let lr = downsample(&mut g, &p, &cfg, x, Padding::Zero).unwrap();
    let z = encode(&mut g, &p, lr, Padding::Zero).unwrap();
    let out = predict(&mut g, &p, z, lr, &batch).unwrap();
    let a = g.abs(out);
    let loss = g.sum(a);
    let grads = g.backward(loss).unwrap();
    for (name, gr) in model.params.names().iter().zip(p.grads(&model.params, &grads)) {
        if name.starts_with("down.") || name.starts_with("enc.") || name.starts_with("est.") {
            assert!(gr.norm() > 0.0, "{name} has no gradient");
        }
    }
}

#[test]
fn zero_amplitude_leaves_a_constant_residual() {
    let cfg = tiny();
    let mut model = Model::init(&cfg, 21).unwrap();
    for n in ["est.amp.w", "est.amp.b"] {
        model.params.get_mut(n).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let lr_img = synth::panorama(8, 8, 1);
    let batch = random_batch(&mut rng, 8, 8, 10, false);
    let mut g = Graph::new();
    let p = model.params.bind_frozen(&mut g);
    let lr = g.constant(tensor(&lr_img));
    let z = encode(&mut g, &p, lr, Padding::Zero).unwrap();
    let out = predict(&mut g, &p, z, lr, &batch).unwrap();
    let out = g.value(out).data().to_vec();
    // Residual of a zero feature vector, the same for every query.
    let mut g2 = Graph::new();
    let p2 = model.params.bind_frozen(&mut g2);
    let zero = g2.constant(Tensor::zeros(&[1, 2 * cfg.freqs]));
    let h = panoview_nn::layers::linear(&mut g2, &p2, "dec.0", zero).unwrap();
    let h = g2.gelu(h);
    let h = panoview_nn::layers::linear(&mut g2, &p2, "dec.1", h).unwrap();
    let h = g2.gelu(h);
    let r = panoview_nn::layers::linear(&mut g2, &p2, "dec.2", h).unwrap();
    let r = g2.value(r).data().to_vec();
    for q in 0..10 {
        let skip: Vec<f64> = (0..3)
            .map(|c| (0..4).map(|j| batch.weights[j * 10 + q] * lr_img.data()[c * 64 + batch.index[j * 10 + q]]).sum())
            .collect();
        for c in 0..3 {
            assert!((out[q * 3 + c] - skip[c] - r[c]).abs() < 1e-12);
        }
    }
    assert_eq!(batch.descriptors.len(), 40 * DESCRIPTOR_LEN);
}

#[test]
fn bicubic_op_matches_resampler_and_its_gradient() {
    let img = synth::panorama(16, 24, 2);
    let mut g = Graph::new();
    let x = g.constant(tensor(&img));
    let y = g.custom(Arc::new(BicubicDown { scale: 2, wrap: false }), &[x]).unwrap();
    let reference = bicubic_downscale(&img, 2).unwrap();
    let out = g.value(y).data().to_vec();
    for (a, b) in out.iter().zip(reference.data()) {
        assert!((a.clamp(0.0, 1.0) - b).abs() < 1e-12);
    }
    for wrap in [false, true] {
        let r = gradcheck(&[tensor(&synth::noise_image(8, 16, 1))], 1e-6, |g, v| {
            let y = g.custom(Arc::new(BicubicDown { scale: 4, wrap }), &[v[0]])?;
            let s = g.square(y);
            Ok(g.sum(s))
        })
        .unwrap();
        assert!(r.max_rel_error() < 1e-6, "{:?}", r.rel_errors);
    }
}
