use crate::error::{mismatch, NnError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Reserved tensor-name prefix for optimizer state inside checkpoints.
pub const OPTIM_PREFIX: &str = "optim/";

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter; `grads` follows the store order.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(mismatch("adam", format!("{} grads for {} params", grads.len(), params.len())));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = &grads[i];
            if g.shape() != p.shape() || self.m[i].shape() != p.shape() {
                return Err(mismatch("adam", format!("param {i}: {:?} vs {:?}", p.shape(), g.shape())));
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, pv) in p.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *pv -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Adds the moment estimates and step count to `out` under
    /// [`OPTIM_PREFIX`], keyed by the names in `params`.
    pub fn export(&self, params: &ParamStore, out: &mut ParamStore) -> Result<()> {
        out.insert(format!("{OPTIM_PREFIX}step"), Tensor::scalar(self.step as f64))?;
        for (i, name) in params.names().iter().enumerate() {
            if let (Some(m), Some(v)) = (self.m.get(i), self.v.get(i)) {
                out.insert(format!("{OPTIM_PREFIX}m/{name}"), m.clone())?;
                out.insert(format!("{OPTIM_PREFIX}v/{name}"), v.clone())?;
            }
        }
        Ok(())
    }

    /// Restores state written by [`Adam::export`].
    pub fn import(&mut self, params: &ParamStore, src: &ParamStore) -> Result<()> {
        let step = src.get(&format!("{OPTIM_PREFIX}step"))?.item();
        self.step = step as u64;
        if self.step == 0 {
            self.m.clear();
            self.v.clear();
            return Ok(());
        }
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, p) in params.iter() {
            let mi = src.get(&format!("{OPTIM_PREFIX}m/{name}"))?;
            let vi = src.get(&format!("{OPTIM_PREFIX}v/{name}"))?;
            if mi.shape() != p.shape() || vi.shape() != p.shape() {
                return Err(NnError::Checkpoint(format!("optimizer state shape for '{name}'")));
            }
            m.push(mi.clone());
            v.push(vi.clone());
        }
        self.m = m;
        self.v = v;
        Ok(())
    }
}
