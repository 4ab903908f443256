//! Tape-based reverse-mode differentiation.

use std::fmt;
use std::sync::Arc;

use crate::error::{mismatch, NnError, Result};
use crate::kernels::{self, ConvGeom, Padding};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A differentiable operation defined outside this crate.
pub trait CustomOp: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    /// Vector-Jacobian product: one gradient per input, each shaped like
    /// that input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Gelu,
    Sin,
    Cos,
    Abs,
    Square,
    Exp,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Unary(Var, Unary),
    Sum(Var),
    Reshape(Var),
    ConcatCols(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    GatherPixels {
        src: Var,
        idx: Arc<Vec<usize>>,
    },
    PairDot {
        f: Var,
        delta: Arc<Vec<[f64; 2]>>,
    },
    GroupWeightedSum {
        x: Var,
        weights: Arc<Vec<f64>>,
        groups: usize,
    },
    Custom {
        op: Arc<dyn CustomOp>,
        inputs: Vec<Var>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations as they are evaluated so that gradients can be
/// propagated back from a scalar loss.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when the loss
    /// does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Input whose gradient is tracked (a parameter or an input under test).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) == self.shape(b) {
            Ok(())
        } else {
            Err(mismatch(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))))
        }
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let name = match op {
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            _ => "mul",
        };
        self.same_shape(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(ta.shape(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a).map(|v| v * k);
        let ng = self.ng(a);
        self.push(t, Op::Scale(a, k), ng)
    }

    pub fn unary(&mut self, a: Var, u: Unary) -> Var {
        let f: fn(f64) -> f64 = match u {
            Unary::Relu => |v| v.max(0.0),
            Unary::Gelu => kernels::gelu,
            Unary::Sin => f64::sin,
            Unary::Cos => f64::cos,
            Unary::Abs => f64::abs,
            Unary::Square => |v| v * v,
            Unary::Exp => f64::exp,
        };
        let t = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(t, Op::Unary(a, u), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Gelu)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sin)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Cos)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    /// Concatenates two `[R, A]` and `[R, B]` matrices into `[R, A + B]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(mismatch("concat_cols", format!("{sa:?} vs {sb:?}")));
        }
        let (r, ca, cb) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(&da[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&db[i * cb..(i + 1) * cb]);
        }
        let t = Tensor::new(&[r, ca + cb], data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::ConcatCols(a, b), ng))
    }

    /// `x[R, I] · wᵀ + b` with `w` shaped `[O, I]` and `b` shaped `[O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] {
            return Err(mismatch("linear", format!("x {sx:?}, w {sw:?}")));
        }
        let (r, i, o) = (sx[0], sx[1], sw[0]);
        if let Some(b) = b {
            if self.shape(b) != [o] {
                return Err(mismatch("linear", format!("bias {:?}, want [{o}]", self.shape(b))));
            }
        }
        let data = kernels::linear_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            r,
            i,
            o,
        );
        let t = Tensor::new(&[r, o], data)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(t, Op::Linear { x, w, b }, ng))
    }

    /// 2D convolution of `x[Cin, H, W]` with `w[Cout, Cin, k, k]`, padding
    /// `k / 2` on every side.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 3 || sw.len() != 4 || sw[1] != sx[0] || sw[2] != sw[3] || stride == 0 {
            return Err(mismatch("conv2d", format!("x {sx:?}, w {sw:?}, stride {stride}")));
        }
        let geom = ConvGeom {
            cin: sx[0],
            cout: sw[0],
            k: sw[2],
            stride,
            pad: sw[2] / 2,
            h: sx[1],
            w: sx[2],
            padding,
        };
        if geom.h + 2 * geom.pad < geom.k || geom.w + 2 * geom.pad < geom.k {
            return Err(mismatch("conv2d", format!("input {sx:?} smaller than kernel")));
        }
        if let Some(b) = b {
            if self.shape(b) != [geom.cout] {
                return Err(mismatch("conv2d", format!("bias {:?}", self.shape(b))));
            }
        }
        let data = kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let t = Tensor::new(&[geom.cout, geom.out_h(), geom.out_w()], data)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }, ng))
    }

    /// Picks pixels of a `[C, H, W]` map by flat index `y·W + x`, giving a
    /// `[Q, C]` matrix.
    pub fn gather_pixels(&mut self, src: Var, idx: Vec<usize>) -> Result<Var> {
        let s = self.shape(src);
        if s.len() != 3 {
            return Err(mismatch("gather_pixels", format!("source {s:?}")));
        }
        let (c, hw) = (s[0], s[1] * s[2]);
        if let Some(bad) = idx.iter().find(|&&i| i >= hw) {
            return Err(mismatch("gather_pixels", format!("index {bad} >= {hw}")));
        }
        let d = self.value(src).data();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in &idx {
            data.extend((0..c).map(|ch| d[ch * hw + i]));
        }
        let t = Tensor::new(&[idx.len(), c], data)?;
        let ng = self.ng(src);
        Ok(self.push(
            t,
            Op::GatherPixels {
                src,
                idx: Arc::new(idx),
            },
            ng,
        ))
    }

    /// For `f[R, 2F]` holding `F` interleaved 2-vectors per row, the dot
    /// product of each with the row's constant `delta`, giving `[R, F]`.
    pub fn pair_dot(&mut self, f: Var, delta: Vec<[f64; 2]>) -> Result<Var> {
        let s = self.shape(f);
        if s.len() != 2 || s[1] % 2 != 0 || s[0] != delta.len() {
            return Err(mismatch("pair_dot", format!("{s:?} with {} offsets", delta.len())));
        }
        let (r, nf) = (s[0], s[1] / 2);
        let d = self.value(f).data();
        let mut data = Vec::with_capacity(r * nf);
        for (row, dl) in delta.iter().enumerate() {
            let fr = &d[row * 2 * nf..(row + 1) * 2 * nf];
            data.extend((0..nf).map(|j| fr[2 * j] * dl[0] + fr[2 * j + 1] * dl[1]));
        }
        let t = Tensor::new(&[r, nf], data)?;
        let ng = self.ng(f);
        Ok(self.push(
            t,
            Op::PairDot {
                f,
                delta: Arc::new(delta),
            },
            ng,
        ))
    }

    /// Collapses `x[G·Q, D]` into `[Q, D]` as `Σ_g weights[g·Q + q] · x[g·Q + q]`.
    pub fn group_weighted_sum(&mut self, x: Var, weights: Vec<f64>, groups: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || groups == 0 || s[0] % groups != 0 || weights.len() != s[0] {
            return Err(mismatch(
                "group_weighted_sum",
                format!("{s:?}, {} weights, {groups} groups", weights.len()),
            ));
        }
        let (q, dd) = (s[0] / groups, s[1]);
        let xd = self.value(x).data();
        let mut data = vec![0.0; q * dd];
        for g in 0..groups {
            for i in 0..q {
                let row = g * q + i;
                let wt = weights[row];
                for j in 0..dd {
                    data[i * dd + j] += wt * xd[row * dd + j];
                }
            }
        }
        let t = Tensor::new(&[q, dd], data)?;
        let ng = self.ng(x);
        Ok(self.push(
            t,
            Op::GroupWeightedSum {
                x,
                weights: Arc::new(weights),
                groups,
            },
            ng,
        ))
    }

    pub fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
        let t = op.forward(&vals)?;
        let ng = inputs.iter().any(|v| self.ng(*v));
        Ok(self.push(
            t,
            Op::Custom {
                op,
                inputs: inputs.to_vec(),
            },
            ng,
        ))
    }

    /// Propagates `d loss / d node` from the scalar `loss` to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(NnError::NonScalarLoss(ls.to_vec()));
        }
        if !self.ng(loss) {
            return Err(NnError::DisconnectedGraph);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(ls, 1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            for (v, gi) in self.vjp(node, &g) {
                if !self.ng(v) {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&gi),
                    slot => *slot = Some(gi),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn vjp(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let like = |v: Var, data: Vec<f64>| {
            Tensor::new(self.shape(v), data).expect("gradient shape follows its input")
        };
        match &node.op {
            Op::Constant | Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let ga = g.data().iter().zip(tb).map(|(g, y)| g * y).collect();
                let gb = g.data().iter().zip(ta).map(|(g, x)| g * x).collect();
                vec![(*a, like(*a, ga)), (*b, like(*b, gb))]
            }
            Op::Scale(a, k) => vec![(*a, g.map(|v| v * k))],
            Op::Unary(a, u) => {
                let x = self.value(*a).data();
                let y = node.value.data();
                let d: Vec<f64> = x
                    .iter()
                    .zip(y)
                    .zip(g.data())
                    .map(|((&x, &y), &g)| {
                        g * match u {
                            Unary::Relu => {
                                if x > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Gelu => kernels::gelu_grad(x),
                            Unary::Sin => x.cos(),
                            Unary::Cos => -x.sin(),
                            Unary::Abs => x.signum() * (x != 0.0) as u8 as f64,
                            Unary::Square => 2.0 * x,
                            Unary::Exp => y,
                        }
                    })
                    .collect();
                vec![(*a, like(*a, d))]
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                vec![(*a, like(*a, vec![g.item(); n]))]
            }
            Op::Reshape(a) => vec![(*a, like(*a, g.data().to_vec()))],
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.shape(*a)[1], self.shape(*b)[1]);
                let mut ga = Vec::new();
                let mut gb = Vec::new();
                for row in g.data().chunks(ca + cb) {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                vec![(*a, like(*a, ga)), (*b, like(*b, gb))]
            }
            Op::Linear { x, w, b } => {
                let (sx, sw) = (self.shape(*x), self.shape(*w));
                let (gx, gw, gb) = kernels::linear_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g.data(),
                    sx[0],
                    sx[1],
                    sw[0],
                );
                let mut out = vec![(*x, like(*x, gx)), (*w, like(*w, gw))];
                if let Some(b) = b {
                    out.push((*b, like(*b, gb)));
                }
                out
            }
            Op::Conv2d { x, w, b, geom } => {
                let (gx, gw, gb) = kernels::conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g.data(),
                );
                let mut out = vec![(*x, like(*x, gx)), (*w, like(*w, gw))];
                if let Some(b) = b {
                    out.push((*b, like(*b, gb)));
                }
                out
            }
            Op::GatherPixels { src, idx } => {
                let s = self.shape(*src);
                let (c, hw) = (s[0], s[1] * s[2]);
                let mut gs = vec![0.0; c * hw];
                for (q, &i) in idx.iter().enumerate() {
                    for ch in 0..c {
                        gs[ch * hw + i] += g.data()[q * c + ch];
                    }
                }
                vec![(*src, like(*src, gs))]
            }
            Op::PairDot { f, delta } => {
                let nf = self.shape(*f)[1] / 2;
                let mut gf = vec![0.0; delta.len() * 2 * nf];
                for (row, dl) in delta.iter().enumerate() {
                    for j in 0..nf {
                        let gv = g.data()[row * nf + j];
                        gf[row * 2 * nf + 2 * j] = gv * dl[0];
                        gf[row * 2 * nf + 2 * j + 1] = gv * dl[1];
                    }
                }
                vec![(*f, like(*f, gf))]
            }
            Op::GroupWeightedSum { x, weights, groups } => {
                let s = self.shape(*x);
                let (q, dd) = (s[0] / groups, s[1]);
                let mut gx = vec![0.0; s[0] * dd];
                for (row, wt) in weights.iter().enumerate() {
                    let i = row % q;
                    for j in 0..dd {
                        gx[row * dd + j] = wt * g.data()[i * dd + j];
                    }
                }
                vec![(*x, like(*x, gx))]
            }
            Op::Custom { op, inputs } => {
                let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let gs = op.backward(&vals, &node.value, g);
                inputs.iter().copied().zip(gs).collect()
            }
        }
    }
}
