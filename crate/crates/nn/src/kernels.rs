//! Numeric kernels shared by forward and backward passes.

/// Padding behaviour of a 2D convolution along the width axis. The height
/// axis is always zero-padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    /// Columns wrap around, as on an equirectangular raster.
    WrapWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub padding: Padding,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.k) / self.stride + 1
    }

    /// Input column for output column `ox` and tap `kx`.
    fn col(&self, ox: usize, kx: usize) -> Option<usize> {
        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
        match self.padding {
            Padding::Zero => (0..self.w as isize).contains(&ix).then_some(ix as usize),
            Padding::WrapWidth => Some(ix.rem_euclid(self.w as isize) as usize),
        }
    }

    fn row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
        (0..self.h as isize).contains(&iy).then_some(iy as usize)
    }

    fn col_table(&self) -> Vec<Vec<Option<usize>>> {
        let ow = self.out_w();
        (0..self.k)
            .map(|kx| (0..ow).map(|ox| self.col(ox, kx)).collect())
            .collect()
    }
}

pub fn conv2d_forward(g: &ConvGeom, x: &[f64], w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.k);
    let cols = g.col_table();
    let mut out = vec![0.0; g.cout * oh * ow];
    for co in 0..g.cout {
        let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        if let Some(b) = b {
            plane.iter_mut().for_each(|v| *v = b[co]);
        }
        for ci in 0..g.cin {
            let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..k {
                for kx in 0..k {
                    let wt = w[((co * g.cin + ci) * k + ky) * k + kx];
                    let ct = &cols[kx];
                    for oy in 0..oh {
                        let Some(iy) = g.row(oy, ky) else { continue };
                        let row = &xin[iy * g.w..(iy + 1) * g.w];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        for (o, c) in orow.iter_mut().zip(ct) {
                            if let Some(ix) = c {
                                *o += wt * row[*ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution with respect to input, weight and bias.
pub fn conv2d_backward(
    g: &ConvGeom,
    x: &[f64],
    w: &[f64],
    grad: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.k);
    let cols = g.col_table();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; g.cout];
    for co in 0..g.cout {
        let gp = &grad[co * oh * ow..(co + 1) * oh * ow];
        gb[co] = gp.iter().sum();
        for ci in 0..g.cin {
            let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            let gxin = &mut gx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..k {
                for kx in 0..k {
                    let wi = ((co * g.cin + ci) * k + ky) * k + kx;
                    let wt = w[wi];
                    let ct = &cols[kx];
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let Some(iy) = g.row(oy, ky) else { continue };
                        let grow = &gp[oy * ow..(oy + 1) * ow];
                        for (gv, c) in grow.iter().zip(ct) {
                            if let Some(ix) = c {
                                let idx = iy * g.w + ix;
                                acc += gv * xin[idx];
                                gxin[idx] += wt * gv;
                            }
                        }
                    }
                    gw[wi] += acc;
                }
            }
        }
    }
    (gx, gw, gb)
}

/// `x[R, I] · wᵀ[I, O] + b[O]`.
pub fn linear_forward(x: &[f64], w: &[f64], b: Option<&[f64]>, r: usize, i: usize, o: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * o];
    for row in 0..r {
        let xr = &x[row * i..(row + 1) * i];
        let orow = &mut out[row * o..(row + 1) * o];
        for (oi, ov) in orow.iter_mut().enumerate() {
            let wr = &w[oi * i..(oi + 1) * i];
            let dot: f64 = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
            *ov = dot + b.map_or(0.0, |b| b[oi]);
        }
    }
    out
}

pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    grad: &[f64],
    r: usize,
    i: usize,
    o: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; r * i];
    let mut gw = vec![0.0; o * i];
    let mut gb = vec![0.0; o];
    for row in 0..r {
        let xr = &x[row * i..(row + 1) * i];
        let gr = &grad[row * o..(row + 1) * o];
        let gxr = &mut gx[row * i..(row + 1) * i];
        for (oi, &gv) in gr.iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            gb[oi] += gv;
            let wr = &w[oi * i..(oi + 1) * i];
            let gwr = &mut gw[oi * i..(oi + 1) * i];
            for j in 0..i {
                gxr[j] += gv * wr[j];
                gwr[j] += gv * xr[j];
            }
        }
    }
    (gx, gw, gb)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
