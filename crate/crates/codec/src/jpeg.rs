//! Baseline sequential JFIF encoding and decoding, 4:4:4, 8-bit precision.

use panoview_core::Image;
use rayon::prelude::*;

use crate::error::{malformed, CodecError, Result};
use crate::huffman::{HuffDecoder, HuffSpec};
use crate::tables::QuantTables;
use crate::transform::{fdct, from_zigzag, idct, rgb_to_ycbcr, to_zigzag, ycbcr_to_rgb};

const SOI: u8 = 0xD8;
const EOI: u8 = 0xD9;
const APP0: u8 = 0xE0;
const DQT: u8 = 0xDB;
const SOF0: u8 = 0xC0;
const DHT: u8 = 0xC4;
const SOS: u8 = 0xDA;

pub const MAX_AC: i32 = 1023;
pub const DC_RANGE: (i32, i32) = (-1024, 1023);

/// Unquantized level-shifted DCT coefficients of an image, zigzag order.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub width: usize,
    pub height: usize,
    pub blocks_h: usize,
    pub blocks_w: usize,
    pub coeffs: [Vec<[f64; 64]>; 3],
}

/// Quantized coefficients per channel (Y, Cb, Cr), blocks in raster order,
/// coefficients in zigzag order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffBlocks {
    pub blocks_h: usize,
    pub blocks_w: usize,
    pub channels: [Vec<[i32; 64]>; 3],
}

impl CoeffBlocks {
    pub fn block_count(&self) -> usize {
        self.blocks_h * self.blocks_w
    }
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub width: usize,
    pub height: usize,
    pub blocks: CoeffBlocks,
    pub tables: QuantTables,
    pub bytes: Vec<u8>,
}

/// Level-shifted YCbCr block `(by, bx)` of channel `c`, with edge
/// replication past the image border.
fn gather_block(ycc: &[Vec<f64>; 3], w: usize, h: usize, c: usize, by: usize, bx: usize) -> [f64; 64] {
    std::array::from_fn(|i| {
        let y = (by * 8 + i / 8).min(h - 1);
        let x = (bx * 8 + i % 8).min(w - 1);
        ycc[c][y * w + x] - 128.0
    })
}

pub fn analyze(img: &Image) -> Analysis {
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let mut ycc = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let v = rgb_to_ycbcr(255.0 * r[i], 255.0 * g[i], 255.0 * b[i]);
        for c in 0..3 {
            ycc[c][i] = v[c];
        }
    }
    let (bh, bw) = (h.div_ceil(8), w.div_ceil(8));
    let coeffs = [0, 1, 2].map(|c| {
        (0..bh * bw)
            .into_par_iter()
            .map(|k| to_zigzag(&fdct(&gather_block(&ycc, w, h, c, k / bw, k % bw))))
            .collect()
    });
    Analysis {
        width: w,
        height: h,
        blocks_h: bh,
        blocks_w: bw,
        coeffs,
    }
}

pub fn quantize(an: &Analysis, tables: &QuantTables) -> CoeffBlocks {
    let channels = [0, 1, 2].map(|c| {
        let t = tables.for_channel(c);
        an.coeffs[c]
            .iter()
            .map(|blk| {
                std::array::from_fn(|k| {
                    let q = (blk[k] / t[k] as f64).round() as i32;
                    if k == 0 {
                        q.clamp(DC_RANGE.0, DC_RANGE.1)
                    } else {
                        q.clamp(-MAX_AC, MAX_AC)
                    }
                })
            })
            .collect()
    });
    CoeffBlocks {
        blocks_h: an.blocks_h,
        blocks_w: an.blocks_w,
        channels,
    }
}

/// Dequantizes, inverts the DCT and color transform, and crops to
/// `height × width`. Values are clamped to `[0, 1]` but not rounded.
pub fn reconstruct(blocks: &CoeffBlocks, tables: &QuantTables, height: usize, width: usize) -> Image {
    let bw = blocks.blocks_w;
    let (ph, pw) = (blocks.blocks_h * 8, bw * 8);
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let t = tables.for_channel(c);
            let spatial: Vec<[f64; 64]> = blocks.channels[c]
                .par_iter()
                .map(|blk| {
                    let deq: [f64; 64] = std::array::from_fn(|k| (blk[k] * t[k] as i32) as f64);
                    idct(&from_zigzag(&deq))
                })
                .collect();
            let mut plane = vec![0.0; ph * pw];
            for (k, sb) in spatial.iter().enumerate() {
                let (by, bx) = (k / bw, k % bw);
                for i in 0..64 {
                    plane[(by * 8 + i / 8) * pw + bx * 8 + i % 8] = sb[i] + 128.0;
                }
            }
            plane
        })
        .collect();
    Image::from_fn(height, width, |y, x| {
        let i = y * pw + x;
        ycbcr_to_rgb(planes[0][i], planes[1][i], planes[2][i]).map(|v| (v / 255.0).clamp(0.0, 1.0))
    })
}

fn category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

fn extra_bits(v: i32, size: u8) -> u32 {
    if v >= 0 {
        v as u32
    } else {
        (v + (1 << size) - 1) as u32
    }
}

/// One entropy-coded symbol: table index (0 DC luma, 1 AC luma, 2 DC
/// chroma, 3 AC chroma), Huffman symbol and appended raw bits.
#[derive(Clone, Copy)]
struct Sym {
    table: u8,
    symbol: u8,
    bits: u32,
    len: u8,
}

fn symbols(blocks: &CoeffBlocks) -> Vec<Sym> {
    let mut out = Vec::new();
    let mut pred = [0i32; 3];
    for b in 0..blocks.block_count() {
        for c in 0..3 {
            let blk = &blocks.channels[c][b];
            let (dct, act) = if c == 0 { (0, 1) } else { (2, 3) };
            let diff = blk[0] - pred[c];
            pred[c] = blk[0];
            let s = category(diff);
            out.push(Sym {
                table: dct,
                symbol: s,
                bits: extra_bits(diff, s),
                len: s,
            });
            let mut run = 0u8;
            for &v in &blk[1..] {
                if v == 0 {
                    run += 1;
                    continue;
                }
                while run >= 16 {
                    out.push(Sym {
                        table: act,
                        symbol: 0xF0,
                        bits: 0,
                        len: 0,
                    });
                    run -= 16;
                }
                let s = category(v);
                out.push(Sym {
                    table: act,
                    symbol: (run << 4) | s,
                    bits: extra_bits(v, s),
                    len: s,
                });
                run = 0;
            }
            if run > 0 {
                out.push(Sym {
                    table: act,
                    symbol: 0x00,
                    bits: 0,
                    len: 0,
                });
            }
        }
    }
    out
}

struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    n: u32,
}

impl BitWriter {
    fn put(&mut self, bits: u32, len: u8) {
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (bits as u64 & ((1u64 << len) - 1));
        self.n += len as u32;
        while self.n >= 8 {
            self.n -= 8;
            let byte = (self.acc >> self.n) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            let pad = 8 - self.n as u8;
            self.put((1 << pad) - 1, pad);
        }
        self.out
    }
}

fn segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xFF, marker]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

/// Serializes quantized coefficients as a baseline JFIF stream with Huffman
/// tables optimized for this image.
pub fn write_jfif(blocks: &CoeffBlocks, tables: &QuantTables, height: usize, width: usize) -> Result<Vec<u8>> {
    if height == 0 || width == 0 || height > 65535 || width > 65535 {
        return Err(CodecError::InvalidInput(format!("{height}x{width} image")));
    }
    if blocks.blocks_h != height.div_ceil(8) || blocks.blocks_w != width.div_ceil(8) {
        return Err(CodecError::InvalidInput("block grid does not match image size".into()));
    }
    let syms = symbols(blocks);
    let mut freq = [[0u64; 256]; 4];
    for s in &syms {
        freq[s.table as usize][s.symbol as usize] += 1;
    }
    let specs: Vec<HuffSpec> = freq.iter().map(HuffSpec::from_frequencies).collect();
    let enc = specs
        .iter()
        .map(HuffSpec::encoder)
        .collect::<Result<Vec<_>>>()?;

    let mut out = vec![0xFF, SOI];
    segment(&mut out, APP0, &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0]);
    let mut dqt = Vec::with_capacity(130);
    for (id, t) in [&tables.luma, &tables.chroma].into_iter().enumerate() {
        dqt.push(id as u8);
        dqt.extend(t.iter().map(|&v| v as u8));
    }
    segment(&mut out, DQT, &dqt);
    let mut sof = vec![8];
    sof.extend_from_slice(&(height as u16).to_be_bytes());
    sof.extend_from_slice(&(width as u16).to_be_bytes());
    sof.extend_from_slice(&[3, 1, 0x11, 0, 2, 0x11, 1, 3, 0x11, 1]);
    segment(&mut out, SOF0, &sof);
    let mut dht = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let class = (i % 2) as u8;
        let id = (i / 2) as u8;
        dht.push((class << 4) | id);
        dht.extend_from_slice(&spec.counts);
        dht.extend_from_slice(&spec.symbols);
    }
    segment(&mut out, DHT, &dht);
    segment(&mut out, SOS, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);
    let mut bw = BitWriter {
        out,
        acc: 0,
        n: 0,
    };
    for s in &syms {
        let (code, len) = enc[s.table as usize][s.symbol as usize];
        bw.put(code as u32, len);
        bw.put(s.bits, s.len);
    }
    let mut out = bw.finish();
    out.extend_from_slice(&[0xFF, EOI]);
    Ok(out)
}

pub fn encode_analysis(an: &Analysis, tables: &QuantTables) -> Result<Encoded> {
    let blocks = quantize(an, tables);
    let bytes = write_jfif(&blocks, tables, an.height, an.width)?;
    Ok(Encoded {
        width: an.width,
        height: an.height,
        blocks,
        tables: tables.clone(),
        bytes,
    })
}

/// RGB → YCbCr, 8×8 DCT, quantization and entropy coding.
pub fn encode(img: &Image, tables: &QuantTables) -> Result<Encoded> {
    encode_analysis(&analyze(img), tables)
}

/// Bits per pixel of a stream relative to the original high-resolution
/// image size.
pub fn bpp_real(bytes: usize, hr_height: usize, hr_width: usize) -> f64 {
    8.0 * bytes as f64 / (hr_height * hr_width) as f64
}

/// Everything recovered from a stream before pixel reconstruction.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub width: usize,
    pub height: usize,
    pub tables: QuantTables,
    pub blocks: CoeffBlocks,
}

impl Decoded {
    pub fn image(&self) -> Image {
        reconstruct(&self.blocks, &self.tables, self.height, self.width)
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    n: u32,
}

impl BitReader<'_> {
    fn bit(&mut self) -> Result<u32> {
        if self.n == 0 {
            let b = *self
                .data
                .get(self.pos)
                .ok_or_else(|| malformed("scan data truncated"))?;
            if b == 0xFF {
                match self.data.get(self.pos + 1) {
                    Some(0x00) => self.pos += 2,
                    _ => return Err(malformed("marker inside scan data")),
                }
            } else {
                self.pos += 1;
            }
            self.acc = b as u32;
            self.n = 8;
        }
        self.n -= 1;
        Ok((self.acc >> self.n) & 1)
    }

    fn bits(&mut self, len: u8) -> Result<u32> {
        let mut v = 0;
        for _ in 0..len {
            v = (v << 1) | self.bit()?;
        }
        Ok(v)
    }

    fn value(&mut self, size: u8) -> Result<i32> {
        if size == 0 {
            return Ok(0);
        }
        if size > 11 {
            return Err(malformed("coefficient category out of range"));
        }
        let v = self.bits(size)? as i32;
        Ok(if v < 1 << (size - 1) {
            v - (1 << size) + 1
        } else {
            v
        })
    }
}

fn read_u16(d: &[u8], at: usize) -> Result<usize> {
    d.get(at..at + 2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as usize)
        .ok_or_else(|| malformed("unexpected end of stream"))
}

/// Parses a stream produced by [`write_jfif`] (or any baseline 4:4:4
/// three-component stream without restart intervals).
pub fn decode_coefficients(data: &[u8]) -> Result<Decoded> {
    if data.len() < 4 || data[0] != 0xFF || data[1] != SOI {
        return Err(malformed("missing SOI marker"));
    }
    let mut qt: [Option<[u16; 64]>; 4] = [None; 4];
    let mut dc: [Option<HuffDecoder>; 4] = Default::default();
    let mut ac: [Option<HuffDecoder>; 4] = Default::default();
    let mut frame: Option<(usize, usize, [(u8, usize); 3])> = None;
    let mut pos = 2;
    loop {
        if data.get(pos) != Some(&0xFF) {
            return Err(malformed(format!("expected marker at byte {pos}")));
        }
        let marker = *data.get(pos + 1).ok_or_else(|| malformed("unexpected end of stream"))?;
        pos += 2;
        if marker == 0xFF {
            pos -= 1;
            continue;
        }
        if marker == EOI {
            return Err(malformed("no scan before EOI"));
        }
        let len = read_u16(data, pos)?;
        if len < 2 || pos + len > data.len() {
            return Err(malformed("segment length exceeds stream"));
        }
        let seg = &data[pos + 2..pos + len];
        match marker {
            DQT => {
                let mut i = 0;
                while i < seg.len() {
                    let (prec, id) = (seg[i] >> 4, (seg[i] & 15) as usize);
                    if prec != 0 || id > 3 || i + 65 > seg.len() {
                        return Err(malformed("unsupported quantization table"));
                    }
                    qt[id] = Some(std::array::from_fn(|k| seg[i + 1 + k] as u16));
                    i += 65;
                }
            }
            DHT => {
                let mut i = 0;
                while i < seg.len() {
                    if i + 17 > seg.len() {
                        return Err(malformed("short huffman table"));
                    }
                    let (class, id) = (seg[i] >> 4, (seg[i] & 15) as usize);
                    let counts: [u8; 16] = seg[i + 1..i + 17].try_into().unwrap();
                    let n: usize = counts.iter().map(|&c| c as usize).sum();
                    if i + 17 + n > seg.len() || class > 1 || id > 3 {
                        return Err(malformed("bad huffman table"));
                    }
                    let spec = HuffSpec {
                        counts,
                        symbols: seg[i + 17..i + 17 + n].to_vec(),
                    };
                    let d = spec.decoder()?;
                    if class == 0 {
                        dc[id] = Some(d);
                    } else {
                        ac[id] = Some(d);
                    }
                    i += 17 + n;
                }
            }
            SOF0 => {
                if seg.len() < 15 || seg[0] != 8 || seg[5] != 3 {
                    return Err(malformed("only 8-bit three-component frames are supported"));
                }
                let h = u16::from_be_bytes([seg[1], seg[2]]) as usize;
                let w = u16::from_be_bytes([seg[3], seg[4]]) as usize;
                if h == 0 || w == 0 {
                    return Err(malformed("empty frame"));
                }
                let mut comps = [(0u8, 0usize); 3];
                for (c, comp) in comps.iter_mut().enumerate() {
                    let b = &seg[6 + 3 * c..9 + 3 * c];
                    if b[1] != 0x11 || b[2] > 3 {
                        return Err(malformed("only 4:4:4 sampling is supported"));
                    }
                    *comp = (b[0], b[2] as usize);
                }
                frame = Some((h, w, comps));
            }
            0xC1..=0xCF if marker != DHT && marker != 0xC8 && marker != 0xCC => {
                return Err(malformed("only baseline sequential streams are supported"));
            }
            0xDD => return Err(malformed("restart intervals are not supported")),
            SOS => {
                let (h, w, comps) = frame.ok_or_else(|| malformed("scan before frame header"))?;
                if seg.first() != Some(&3) || seg.len() < 10 {
                    return Err(malformed("scan must cover all three components"));
                }
                let mut sel = [(0usize, 0usize, 0usize); 3];
                for (c, s) in sel.iter_mut().enumerate() {
                    let (cid, td) = (seg[1 + 2 * c], seg[2 + 2 * c]);
                    if comps[c].0 != cid {
                        return Err(malformed("scan component order differs from frame"));
                    }
                    *s = (comps[c].1, (td >> 4) as usize, (td & 15) as usize);
                }
                let tables = {
                    let get = |id: usize| qt[id].ok_or_else(|| malformed("missing quantization table"));
                    let luma = get(sel[0].0)?;
                    let chroma = get(sel[1].0)?;
                    if get(sel[2].0)? != chroma {
                        return Err(malformed("Cb and Cr must share a quantization table"));
                    }
                    QuantTables {
                        luma,
                        chroma,
                        quality: None,
                    }
                };
                let decs = sel
                    .iter()
                    .map(|&(_, d, a)| {
                        let dd = dc.get(d).and_then(Option::as_ref);
                        let aa = ac.get(a).and_then(Option::as_ref);
                        dd.zip(aa).ok_or_else(|| malformed("missing huffman table"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (bh, bw) = (h.div_ceil(8), w.div_ceil(8));
                let mut channels: [Vec<[i32; 64]>; 3] = Default::default();
                let mut rd = BitReader {
                    data,
                    pos: pos + len,
                    acc: 0,
                    n: 0,
                };
                let mut pred = [0i32; 3];
                for _ in 0..bh * bw {
                    for c in 0..3 {
                        let (dd, aa) = decs[c];
                        let mut blk = [0i32; 64];
                        let s = dd.decode(|| rd.bit())?;
                        pred[c] += rd.value(s)?;
                        blk[0] = pred[c];
                        let mut k = 1;
                        while k < 64 {
                            let rs = aa.decode(|| rd.bit())?;
                            let (run, size) = ((rs >> 4) as usize, rs & 15);
                            if size == 0 {
                                if run == 15 {
                                    k += 16;
                                    continue;
                                }
                                break;
                            }
                            k += run;
                            if k > 63 {
                                return Err(malformed("coefficient run past block end"));
                            }
                            blk[k] = rd.value(size)?;
                            k += 1;
                        }
                        if k > 64 {
                            return Err(malformed("coefficient run past block end"));
                        }
                        channels[c].push(blk);
                    }
                }
                let mut end = rd.pos;
                if data.get(end) == Some(&0xFF) && data.get(end + 1) == Some(&0x00) {
                    end += 2;
                }
                if data.get(end..end + 2) != Some(&[0xFF, EOI]) {
                    return Err(malformed("missing EOI after scan"));
                }
                return Ok(Decoded {
                    width: w,
                    height: h,
                    tables,
                    blocks: CoeffBlocks {
                        blocks_h: bh,
                        blocks_w: bw,
                        channels,
                    },
                });
            }
            _ => {}
        }
        pos += len;
    }
}

pub fn decode(data: &[u8]) -> Result<Image> {
    Ok(decode_coefficients(data)?.image())
}
