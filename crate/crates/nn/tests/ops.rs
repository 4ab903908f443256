use std::collections::BTreeMap;
use std::sync::Arc;

use panoview_nn::gradcheck::gradcheck;
use panoview_nn::layers;
use panoview_nn::optim::OPTIM_PREFIX;
use panoview_nn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces any output to a scalar with fixed pseudo-random weights so every
/// output element contributes a distinct gradient.
fn project(g: &mut Graph, v: Var) -> Result<Var> {
    let shape = g.shape(v).to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(&shape, (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect())?;
    let c = g.constant(w);
    let m = g.mul(v, c)?;
    Ok(g.sum(m))
}

fn check(inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Result<Var>) {
    let r = gradcheck(&inputs, 1e-6, |g, v| {
        let out = f(g, v)?;
        project(g, out)
    })
    .unwrap();
    assert!(r.max_rel_error() < TOL, "{:?}", r.rel_errors);
}

#[test]
fn elementwise_ops_pass_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[3, 4]);
    let b = rand_tensor(&mut rng, &[3, 4]);
    check(vec![a.clone(), b.clone()], |g, v| g.add(v[0], v[1]));
    check(vec![a.clone(), b.clone()], |g, v| g.sub(v[0], v[1]));
    check(vec![a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]));
    check(vec![a.clone()], |g, v| Ok(g.scale(v[0], -2.5)));
    for u in [Unary::Gelu, Unary::Sin, Unary::Cos, Unary::Square, Unary::Exp] {
        check(vec![a.clone()], |g, v| Ok(g.unary(v[0], u)));
    }
    // Keep inputs away from the kink of relu and abs.
    let away = a.map(|v| if v.abs() < 0.05 { 0.3 } else { v });
    check(vec![away.clone()], |g, v| Ok(g.relu(v[0])));
    check(vec![away], |g, v| Ok(g.abs(v[0])));
}

#[test]
fn structural_ops_pass_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[5, 2]);
    let b = rand_tensor(&mut rng, &[5, 3]);
    check(vec![a.clone(), b], |g, v| g.concat_cols(v[0], v[1]));
    check(vec![a.clone()], |g, v| g.reshape(v[0], &[2, 5]));
    check(vec![a.clone()], |g, v| Ok(g.mean(v[0])));
    let fm = rand_tensor(&mut rng, &[3, 4, 5]);
    check(vec![fm], |g, v| g.gather_pixels(v[0], vec![0, 7, 7, 19, 3]));
    let f = rand_tensor(&mut rng, &[4, 6]);
    let delta = vec![[0.1, -0.3], [0.5, 0.2], [-0.7, 0.0], [0.25, 0.9]];
    check(vec![f], move |g, v| g.pair_dot(v[0], delta.clone()));
    let x = rand_tensor(&mut rng, &[6, 3]);
    let w: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 + 0.05).collect();
    check(vec![x], move |g, v| g.group_weighted_sum(v[0], w.clone(), 3));
}

#[test]
fn linear_and_conv_pass_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[4, 3]);
    let w = rand_tensor(&mut rng, &[5, 3]);
    let b = rand_tensor(&mut rng, &[5]);
    check(vec![x, w, b], |g, v| g.linear(v[0], v[1], Some(v[2])));
    for (stride, pad) in [(1, Padding::Zero), (2, Padding::Zero), (1, Padding::WrapWidth), (2, Padding::WrapWidth)] {
        let x = rand_tensor(&mut rng, &[2, 6, 8]);
        let w = rand_tensor(&mut rng, &[3, 2, 3, 3]);
        let b = rand_tensor(&mut rng, &[3]);
        check(vec![x, w, b], move |g, v| g.conv2d(v[0], v[1], Some(v[2]), stride, pad));
    }
}

/// Direct convolution written as nested loops over output pixels.
fn conv_reference(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, wrap: bool) -> Vec<f64> {
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let pad = (k / 2) as isize;
    let oh = (h + 2 * (k / 2) - k) / stride + 1;
    let ow = (wd + 2 * (k / 2) - k) / stride + 1;
    let mut out = Vec::new();
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b.data()[o];
                for c in 0..ci {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad;
                            let mut ix = (ox * stride + kx) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            if wrap {
                                ix = ix.rem_euclid(wd as isize);
                            } else if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            acc += w.data()[((o * ci + c) * k + ky) * k + kx]
                                * x.data()[(c * h + iy as usize) * wd + ix as usize];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

#[test]
fn conv_matches_direct_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (stride, pad) in [(1, Padding::Zero), (2, Padding::WrapWidth), (2, Padding::Zero)] {
        let x = rand_tensor(&mut rng, &[3, 7, 10]);
        let w = rand_tensor(&mut rng, &[4, 3, 3, 3]);
        let b = rand_tensor(&mut rng, &[4]);
        let mut g = Graph::new();
        let (vx, vw, vb) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let y = g.conv2d(vx, vw, Some(vb), stride, pad).unwrap();
        let want = conv_reference(&x, &w, &b, stride, pad == Padding::WrapWidth);
        for (a, e) in g.value(y).data().iter().zip(&want) {
            assert!((a - e).abs() < 1e-12, "stride {stride} {pad:?}: {a} vs {e}");
        }
        assert_eq!(g.value(y).len(), want.len());
    }
}

#[test]
fn wrap_padding_is_roll_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[2, 5, 8]);
    let w = rand_tensor(&mut rng, &[2, 2, 3, 3]);
    let roll = |t: &Tensor, k: usize| {
        let s = t.shape().to_vec();
        let mut d = vec![0.0; t.len()];
        for c in 0..s[0] {
            for y in 0..s[1] {
                for x in 0..s[2] {
                    d[(c * s[1] + y) * s[2] + x] = t.data()[(c * s[1] + y) * s[2] + (x + k) % s[2]];
                }
            }
        }
        Tensor::new(&s, d).unwrap()
    };
    let run = |x: Tensor| {
        let mut g = Graph::new();
        let (vx, vw) = (g.constant(x), g.constant(w.clone()));
        let y = g.conv2d(vx, vw, None, 1, Padding::WrapWidth).unwrap();
        g.value(y).clone()
    };
    assert_eq!(run(roll(&x, 3)), roll(&run(x), 3));
}

#[test]
fn shape_errors_are_reported() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[3, 2]));
    assert!(matches!(g.add(a, b), Err(NnError::ShapeMismatch { .. })));
    let w22 = g.constant(Tensor::zeros(&[2, 2]));
    assert!(matches!(g.linear(a, w22, None), Err(NnError::ShapeMismatch { .. })));
    assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
    assert!(Tensor::new(&[1, 1, 1, 1, 1], vec![0.0]).is_err());
}

#[test]
fn backward_requires_connected_scalar_loss() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::full(&[2], 1.0));
    let s = g.sum(a);
    assert!(matches!(g.backward(s), Err(NnError::DisconnectedGraph)));
    let p = g.leaf(Tensor::full(&[2], 1.0));
    assert!(matches!(g.backward(p), Err(NnError::NonScalarLoss(_))));
}

#[test]
fn gradients_accumulate_over_reuse() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(3.0));
    let y = g.mul(x, x).unwrap();
    let z = g.add(y, x).unwrap();
    let gr = g.backward(z).unwrap();
    assert_eq!(gr.get(x).unwrap().item(), 7.0);
}

#[derive(Debug)]
struct Cube;

impl CustomOp for Cube {
    fn name(&self) -> &'static str {
        "cube"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(inputs[0].map(|v| v * v * v))
    }
    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let d = inputs[0].data().iter().zip(grad.data()).map(|(x, g)| 3.0 * x * x * g).collect();
        vec![Tensor::new(inputs[0].shape(), d).unwrap()]
    }
}

#[test]
fn custom_ops_take_part_in_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[7]);
    check(vec![x], |g, v| g.custom(Arc::new(Cube), &[v[0]]));
}

#[test]
fn adam_matches_closed_form_steps() {
    let mut store = ParamStore::new();
    store.insert("p", Tensor::new(&[2], vec![1.0, -2.0]).unwrap()).unwrap();
    let mut opt = Adam::with_betas(0.1, 0.9, 0.999, 1e-8);
    let grads = [[0.5, -1.0], [0.25, 2.0], [-1.0, 0.1]];
    let mut p = [1.0f64, -2.0];
    let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
    for (t, gr) in grads.iter().enumerate() {
        opt.step(&mut store, &[Tensor::new(&[2], gr.to_vec()).unwrap()]).unwrap();
        let t = (t + 1) as i32;
        for j in 0..2 {
            m[j] = 0.9 * m[j] + 0.1 * gr[j];
            v[j] = 0.999 * v[j] + 0.001 * gr[j] * gr[j];
            let mh = m[j] / (1.0 - 0.9f64.powi(t));
            let vh = v[j] / (1.0 - 0.999f64.powi(t));
            p[j] -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
    }
    for j in 0..2 {
        assert!((store.get("p").unwrap().data()[j] - p[j]).abs() < 1e-14);
    }
    // The first step moves every coordinate by lr against its gradient sign.
    let mut s2 = ParamStore::new();
    s2.insert("q", Tensor::new(&[2], vec![0.0, 0.0]).unwrap()).unwrap();
    let mut o2 = Adam::new(0.01);
    o2.step(&mut s2, &[Tensor::new(&[2], vec![3.0, -0.001]).unwrap()]).unwrap();
    let q = s2.get("q").unwrap().data();
    assert!((q[0] + 0.01).abs() < 1e-9 && (q[1] - 0.01).abs() < 1e-6);
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    layers::init_conv(&mut store, "c0", 3, 4, 3, &mut rng).unwrap();
    layers::init_linear(&mut store, "fc", 4, 2, &mut rng).unwrap();
    store.insert("odd", Tensor::new(&[1], vec![f64::MIN_POSITIVE]).unwrap()).unwrap();
    let mut opt = Adam::new(1e-3);
    let grads: Vec<Tensor> = store.iter().map(|(_, t)| rand_tensor(&mut rng, t.shape())).collect();
    opt.step(&mut store, &grads).unwrap();
    let mut all = store.clone();
    opt.export(&store, &mut all).unwrap();
    let mut meta = BTreeMap::new();
    meta.insert("scale".to_string(), "4".to_string());
    let ck = Checkpoint { seed: 99, meta, tensors: all };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    for ((_, a), (_, b)) in back.tensors.iter().zip(ck.tensors.iter()) {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    let mut restored = Adam::new(1e-3);
    restored.import(&store, &back.tensors).unwrap();
    assert_eq!(restored, opt);
    assert!(back.tensors.contains(&format!("{OPTIM_PREFIX}step")));
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let mut store = ParamStore::new();
    store.insert("a", Tensor::full(&[3, 3], 0.5)).unwrap();
    let ck = Checkpoint { seed: 1, meta: BTreeMap::new(), tensors: store };
    let mut bytes = Vec::new();
    ck.write_to(&mut bytes).unwrap();
    for cut in [0, 3, 10, bytes.len() - 1] {
        assert!(Checkpoint::read_from(&mut &bytes[..cut]).is_err(), "cut {cut}");
    }
    bytes[0] = b'X';
    assert!(Checkpoint::read_from(&mut &bytes[..]).is_err());
}

#[test]
fn duplicate_and_unknown_names_fail() {
    let mut store = ParamStore::new();
    store.insert("a", Tensor::scalar(1.0)).unwrap();
    assert!(matches!(store.insert("a", Tensor::scalar(2.0)), Err(NnError::DuplicateParam(_))));
    assert!(matches!(store.get("b"), Err(NnError::UnknownParam(_))));
}

#[test]
fn one_layer_regression_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    layers::init_linear(&mut store, "fc", 2, 1, &mut rng).unwrap();
    let xs = rand_tensor(&mut rng, &[32, 2]);
    let ys: Vec<f64> = xs.data().chunks(2).map(|r| 0.7 * r[0] - 1.3 * r[1] + 0.2).collect();
    let ys = Tensor::new(&[32, 1], ys).unwrap();
    let mut opt = Adam::new(0.05);
    let mut last = f64::INFINITY;
    for _ in 0..400 {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(xs.clone());
        let y = g.constant(ys.clone());
        let pred = layers::linear(&mut g, &p, "fc", x).unwrap();
        let d = g.sub(pred, y).unwrap();
        let sq = g.square(d);
        let loss = g.mean(sq);
        last = g.value(loss).item();
        let gr = g.backward(loss).unwrap();
        let grads = p.grads(&store, &gr);
        opt.step(&mut store, &grads).unwrap();
    }
    assert!(last < 1e-6, "{last}");
}
