//! Parameter initialisation and the layer forms used by the models.

use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::kernels::Padding;
use crate::params::{Bound, ParamStore};
use crate::tensor::Tensor;

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("shape and length agree")
}

/// Adds `{name}.w` shaped `[out, in]` and `{name}.b` shaped `[out]`, both
/// uniform in `±1/√in`.
pub fn init_linear(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Result<()> {
    let bound = 1.0 / (input as f64).sqrt();
    store.insert(format!("{name}.w"), uniform(rng, &[output, input], bound))?;
    store.insert(format!("{name}.b"), uniform(rng, &[output], bound))
}

/// Adds `{name}.w` shaped `[cout, cin, k, k]` and `{name}.b` shaped `[cout]`,
/// uniform in `±1/√(cin·k²)`.
pub fn init_conv(
    store: &mut ParamStore,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let bound = 1.0 / ((cin * k * k) as f64).sqrt();
    store.insert(format!("{name}.w"), uniform(rng, &[cout, cin, k, k], bound))?;
    store.insert(format!("{name}.b"), uniform(rng, &[cout], bound))
}

/// Applies the linear layer registered under `name`.
pub fn linear(g: &mut Graph, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{name}.w"))?;
    let b = p.opt(&format!("{name}.b"));
    g.linear(x, w, b)
}

/// Applies the convolution registered under `name`.
pub fn conv(g: &mut Graph, p: &Bound, name: &str, x: Var, stride: usize, padding: Padding) -> Result<Var> {
    let w = p.get(&format!("{name}.w"))?;
    let b = p.opt(&format!("{name}.b"));
    g.conv2d(x, w, b, stride, padding)
}
