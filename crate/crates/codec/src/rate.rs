//! Factorized entropy models over quantized DCT coefficients.
//!
//! Every zigzag position has its own discretized zero-mean Laplace
//! distribution, one set for luma and one shared by both chroma channels.
//! DC coefficients are modeled on their differences to the previous block of
//! the same channel, which is what the entropy coder transmits.

use crate::jpeg::CoeffBlocks;

/// Symbols with magnitude above this fall into the escape bucket.
pub const ESCAPE: i32 = 1023;
/// Raw bits spent after an escape symbol.
pub const ESCAPE_EXTRA_BITS: f64 = 11.0;
/// Probability floor keeping every symbol codable.
pub const PROB_FLOOR: f64 = 1e-12;

const LOG_SCALE_RANGE: (f64, f64) = (-6.0, 9.0);

/// Probability that a Laplace(0, b) variable rounds to `x`, i.e. its mass on
/// `[x − 0.5, x + 0.5]`. Defined for real `x` so it can be differentiated.
pub fn laplace_mass(x: f64, b: f64) -> f64 {
    let a = x.abs();
    if a >= 0.5 {
        0.5 * (-(a - 0.5) / b).exp() * (1.0 - (-1.0 / b).exp())
    } else {
        1.0 - 0.5 * (-(0.5 - a) / b).exp() - 0.5 * (-(0.5 + a) / b).exp()
    }
}

/// `(∂ ln P / ∂x, ∂ ln P / ∂ ln b)` for [`laplace_mass`].
pub fn laplace_mass_grad(x: f64, b: f64) -> (f64, f64) {
    let a = x.abs();
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    if a >= 0.5 {
        let e = (-1.0 / b).exp();
        let dlb = ((a - 0.5) - e / (1.0 - e)) / b;
        (-sign / b, dlb)
    } else {
        let p = laplace_mass(x, b);
        let (em, ep) = ((-(0.5 - a) / b).exp(), (-(0.5 + a) / b).exp());
        let dpa = 0.5 / b * (ep - em);
        let dpb = -0.5 * em * (0.5 - a) / (b * b) - 0.5 * ep * (0.5 + a) / (b * b);
        (sign * dpa / p, b * dpb / p)
    }
}

/// Symbol probabilities for one channel group and zigzag position.
pub trait SymbolModel {
    /// Bits spent on `symbol` at `(group, pos)`; `group` 0 is luma, 1 chroma.
    fn bits(&self, group: usize, pos: usize, symbol: i32) -> f64;
}

/// Learnable-scale discretized Laplace model.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceModel {
    /// Natural log of the Laplace scale, `[group][zigzag position]`.
    pub log_scale: [[f64; 64]; 2],
}

impl Default for LaplaceModel {
    fn default() -> Self {
        Self {
            log_scale: [[0.0; 64]; 2],
        }
    }
}

fn bits_laplace(symbol: i32, b: f64) -> f64 {
    if symbol.abs() > ESCAPE {
        let tail = 0.5 * (-(ESCAPE as f64 + 0.5) / b).exp();
        -tail.max(PROB_FLOOR).log2() + ESCAPE_EXTRA_BITS
    } else {
        -laplace_mass(symbol as f64, b).max(PROB_FLOOR).log2()
    }
}

impl SymbolModel for LaplaceModel {
    fn bits(&self, group: usize, pos: usize, symbol: i32) -> f64 {
        bits_laplace(symbol, self.log_scale[group][pos].exp())
    }
}

/// Explicit probability table over the integers `lo..lo + pmf.len()`,
/// shared by every position; symbols outside cost the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct TableModel {
    pub lo: i32,
    pub pmf: Vec<f64>,
}

impl TableModel {
    pub fn uniform(lo: i32, hi: i32) -> Self {
        let k = (hi - lo + 1) as usize;
        Self {
            lo,
            pmf: vec![1.0 / k as f64; k],
        }
    }
}

impl SymbolModel for TableModel {
    fn bits(&self, _group: usize, _pos: usize, symbol: i32) -> f64 {
        let i = symbol - self.lo;
        let p = if i >= 0 && (i as usize) < self.pmf.len() {
            self.pmf[i as usize]
        } else {
            0.0
        };
        -p.max(PROB_FLOOR).log2()
    }
}

/// Calls `f(group, pos, symbol)` for every transmitted coefficient symbol.
pub fn for_each_symbol(blocks: &CoeffBlocks, mut f: impl FnMut(usize, usize, i32)) {
    for (c, ch) in blocks.channels.iter().enumerate() {
        let group = usize::from(c > 0);
        let mut prev = 0;
        for blk in ch {
            f(group, 0, blk[0] - prev);
            prev = blk[0];
            for (pos, &v) in blk.iter().enumerate().skip(1) {
                f(group, pos, v);
            }
        }
    }
}

/// Estimated coefficient payload in bits: `Σ −log₂ p(symbol)`.
pub fn estimate_rate(blocks: &CoeffBlocks, model: &impl SymbolModel) -> f64 {
    let mut bits = 0.0;
    for_each_symbol(blocks, |g, pos, s| bits += model.bits(g, pos, s));
    bits
}

/// Symbol counts per group and position.
#[derive(Debug, Clone)]
pub struct Histogram {
    counts: Vec<std::collections::BTreeMap<i32, u64>>,
}

impl Histogram {
    pub fn new() -> Self {
        Self {
            counts: vec![Default::default(); 128],
        }
    }

    pub fn add(&mut self, blocks: &CoeffBlocks) {
        for_each_symbol(blocks, |g, pos, s| *self.counts[g * 64 + pos].entry(s).or_default() += 1);
    }

    /// Bits needed by the empirical distribution itself (a lower bound for
    /// any factorized model on the same data).
    pub fn entropy_bits(&self) -> f64 {
        self.counts
            .iter()
            .map(|m| {
                let n: u64 = m.values().sum();
                m.values()
                    .map(|&c| c as f64 * -(c as f64 / n as f64).log2())
                    .sum::<f64>()
            })
            .sum()
    }

    fn cost(&self, slot: usize, log_b: f64) -> f64 {
        let b = log_b.exp();
        self.counts[slot]
            .iter()
            .map(|(&s, &c)| c as f64 * bits_laplace(s, b))
            .sum()
    }

    /// Maximum-likelihood scales by golden-section search per slot.
    pub fn fit_laplace(&self) -> LaplaceModel {
        let mut model = LaplaceModel::default();
        for slot in 0..128 {
            let best = if self.counts[slot].is_empty() {
                LOG_SCALE_RANGE.0
            } else {
                golden_min(|x| self.cost(slot, x), LOG_SCALE_RANGE.0, LOG_SCALE_RANGE.1)
            };
            model.log_scale[slot / 64][slot % 64] = best;
        }
        model
    }
}

impl Default for Histogram {
    fn default() -> Self {
        Self::new()
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Fits a Laplace model to the coefficients of several images.
pub fn fit_model<'a>(sets: impl IntoIterator<Item = &'a CoeffBlocks>) -> LaplaceModel {
    let mut h = Histogram::new();
    for b in sets {
        h.add(b);
    }
    h.fit_laplace()
}


/// Bytes of every marker segment except DHT, as written by the encoder.
pub const FIXED_HEADER_BYTES: usize = 2 + 18 + 134 + 19 + 14 + 2;

/// Exact size of the container around the entropy-coded data: fixed
/// segments plus the Huffman tables, whose size depends on which symbols
/// occur.
pub fn container_bits(blocks: &CoeffBlocks) -> f64 {
    let mut used = [[false; 256]; 4];
    for (c, ch) in blocks.channels.iter().enumerate() {
        let (dct, act) = if c == 0 { (0, 1) } else { (2, 3) };
        let mut prev = 0i32;
        for blk in ch {
            let d = blk[0] - prev;
            prev = blk[0];
            used[dct][(32 - d.unsigned_abs().leading_zeros()) as usize] = true;
            let mut run = 0;
            for &v in &blk[1..] {
                if v == 0 {
                    run += 1;
                    continue;
                }
                if run >= 16 {
                    used[act][0xF0] = true;
                    run %= 16;
                }
                used[act][(run << 4) | (32 - v.unsigned_abs().leading_zeros()) as usize] = true;
                run = 0;
            }
            if run > 0 {
                used[act][0] = true;
            }
        }
    }
    let symbols: usize = used.iter().map(|t| t.iter().filter(|&&u| u).count()).sum();
    let dht = 4 + 4 * 17 + symbols;
    8.0 * (FIXED_HEADER_BYTES + dht) as f64
}

/// Estimated size of the whole stream: modeled coefficient bits plus the
/// container.
pub fn estimate_stream_bits(blocks: &CoeffBlocks, model: &impl SymbolModel) -> f64 {
    estimate_rate(blocks, model) + container_bits(blocks)
}
