//! Per-image optimal Huffman tables limited to 16-bit codes, and canonical
//! code construction for both directions.

use crate::error::{malformed, Result};

/// Table as stored in a DHT segment: code counts per length 1..=16 and the
/// symbols in code order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffSpec {
    pub counts: [u8; 16],
    pub symbols: Vec<u8>,
}

impl HuffSpec {
    /// Builds a length-limited optimal code for the symbol frequencies. A
    /// reserved pseudo-symbol keeps the all-ones code unused.
    pub fn from_frequencies(freq: &[u64; 256]) -> Self {
        let mut f: Vec<u64> = freq.to_vec();
        f.push(1);
        let n = f.len();
        let mut codesize = vec![0usize; n];
        let mut others = vec![usize::MAX; n];
        loop {
            let mut v1 = usize::MAX;
            let mut v2 = usize::MAX;
            for i in 0..n {
                if f[i] == 0 {
                    continue;
                }
                if v1 == usize::MAX || f[i] <= f[v1] {
                    v1 = i;
                }
            }
            for i in 0..n {
                if f[i] == 0 || i == v1 {
                    continue;
                }
                if v2 == usize::MAX || f[i] <= f[v2] {
                    v2 = i;
                }
            }
            if v2 == usize::MAX {
                break;
            }
            f[v1] += f[v2];
            f[v2] = 0;
            codesize[v1] += 1;
            while others[v1] != usize::MAX {
                v1 = others[v1];
                codesize[v1] += 1;
            }
            others[v1] = v2;
            codesize[v2] += 1;
            while others[v2] != usize::MAX {
                v2 = others[v2];
                codesize[v2] += 1;
            }
        }
        let mut bits = [0usize; 64];
        for &c in &codesize {
            if c > 0 {
                bits[c] += 1;
            }
        }
        for i in (17..64).rev() {
            while bits[i] > 0 {
                let mut j = i - 2;
                while bits[j] == 0 {
                    j -= 1;
                }
                bits[i] -= 2;
                bits[i - 1] += 1;
                bits[j + 1] += 2;
                bits[j] -= 1;
            }
        }
        let mut i = 16;
        while bits[i] == 0 {
            i -= 1;
        }
        bits[i] -= 1;
        let mut order: Vec<usize> = (0..256).filter(|&s| codesize[s] > 0).collect();
        order.sort_by_key(|&s| (codesize[s], s));
        let counts = std::array::from_fn(|l| bits[l + 1] as u8);
        Self {
            counts,
            symbols: order.into_iter().map(|s| s as u8).collect(),
        }
    }

    fn check(&self) -> Result<()> {
        let total: usize = self.counts.iter().map(|&c| c as usize).sum();
        if total != self.symbols.len() || total > 256 {
            return Err(malformed("huffman table counts do not match symbols"));
        }
        let mut avail = 1u32;
        for &c in &self.counts {
            avail = avail * 2;
            if c as u32 > avail {
                return Err(malformed("huffman table oversubscribed"));
            }
            avail -= c as u32;
        }
        Ok(())
    }

    /// `(code, length)` per symbol value.
    pub fn encoder(&self) -> Result<[(u16, u8); 256]> {
        self.check()?;
        let mut table = [(0u16, 0u8); 256];
        let mut code = 0u32;
        let mut k = 0;
        for len in 1..=16u8 {
            for _ in 0..self.counts[len as usize - 1] {
                table[self.symbols[k] as usize] = (code as u16, len);
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        Ok(table)
    }

    pub fn decoder(&self) -> Result<HuffDecoder> {
        self.check()?;
        let mut maxcode = [-1i32; 17];
        let mut valptr = [0usize; 17];
        let mut mincode = [0i32; 17];
        let mut code = 0i32;
        let mut k = 0usize;
        for len in 1..=16 {
            let n = self.counts[len - 1] as usize;
            if n > 0 {
                valptr[len] = k;
                mincode[len] = code;
                code += n as i32;
                k += n;
                maxcode[len] = code - 1;
            }
            code <<= 1;
        }
        Ok(HuffDecoder {
            maxcode,
            mincode,
            valptr,
            symbols: self.symbols.clone(),
        })
    }

    /// Total coded bits for the given symbol frequencies.
    pub fn cost(&self, freq: &[u64; 256]) -> Result<u64> {
        let enc = self.encoder()?;
        Ok(freq
            .iter()
            .zip(enc.iter())
            .map(|(&f, &(_, l))| f * l as u64)
            .sum())
    }
}

#[derive(Debug, Clone)]
pub struct HuffDecoder {
    maxcode: [i32; 17],
    mincode: [i32; 17],
    valptr: [usize; 17],
    symbols: Vec<u8>,
}

impl HuffDecoder {
    /// Decodes one symbol, pulling bits one at a time from `next_bit`.
    pub fn decode(&self, mut next_bit: impl FnMut() -> Result<u32>) -> Result<u8> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | next_bit()? as i32;
            if code <= self.maxcode[len] {
                return Ok(self.symbols[self.valptr[len] + (code - self.mincode[len]) as usize]);
            }
        }
        Err(malformed("invalid huffman code"))
    }
}
