//! Procedural test panoramas.
//!
//! Content is defined as a function of the 3D view direction, so every
//! panorama is continuous across the `±π` seam and consistent at the poles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{erp_to_sphere, ErpCoord};
use crate::image::Image;
use crate::sampling::derive_seed;

fn hash3(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let k = derive_seed(
        seed,
        (x as u64).wrapping_mul(0x8CB9_2BA7_2F3D_8DD7)
            ^ (y as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)
            ^ (z as u64).wrapping_mul(0xA076_1D64_78BD_642F),
    );
    (k >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinear value noise in `[0, 1)`.
fn value_noise(seed: u64, p: [f64; 3]) -> f64 {
    let f = p.map(f64::floor);
    let t = [smooth(p[0] - f[0]), smooth(p[1] - f[1]), smooth(p[2] - f[2])];
    let (x0, y0, z0) = (f[0] as i64, f[1] as i64, f[2] as i64);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { t[0] } else { 1.0 - t[0] })
                    * (if dy == 1 { t[1] } else { 1.0 - t[1] })
                    * (if dz == 1 { t[2] } else { 1.0 - t[2] });
                acc += w * hash3(seed, x0 + dx, y0 + dy, z0 + dz);
            }
        }
    }
    acc
}

/// Sum of `octaves` noise layers starting at `base` cycles per unit radius.
fn fractal(seed: u64, d: [f64; 3], base: f64, octaves: usize) -> f64 {
    let mut amp = 0.5;
    let mut freq = base;
    let mut acc = 0.0;
    let mut norm = 0.0;
    for o in 0..octaves {
        acc += amp * value_noise(seed.wrapping_add(o as u64), d.map(|c| c * freq));
        norm += amp;
        amp *= 0.55;
        freq *= 2.03;
    }
    acc / norm
}

struct Scene {
    seed: u64,
    sky: [f64; 3],
    ground: [f64; 3],
    blobs: Vec<([f64; 3], f64, [f64; 3])>,
    stripes: Vec<([f64; 3], f64, f64, [f64; 3])>,
    checker: (f64, f64, [f64; 3]),
    detail: f64,
    detail_freq: f64,
}

impl Scene {
    fn random(seed: u64, detail: f64, detail_freq: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let color = |rng: &mut ChaCha8Rng| [0; 3].map(|_| rng.random_range(0.05..0.95));
        let unit = |rng: &mut ChaCha8Rng| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            [r * a.cos(), z, r * a.sin()]
        };
        let sky = color(&mut rng);
        let ground = color(&mut rng);
        let blobs = (0..6)
            .map(|_| (unit(&mut rng), rng.random_range(8.0..60.0), color(&mut rng)))
            .collect();
        let stripes = (0..3)
            .map(|_| {
                (
                    unit(&mut rng),
                    rng.random_range(10.0..40.0),
                    rng.random_range(0.0..6.3),
                    color(&mut rng),
                )
            })
            .collect();
        let checker = (
            rng.random_range(4..12) as f64,
            rng.random_range(3..9) as f64,
            color(&mut rng),
        );
        Self {
            seed,
            sky,
            ground,
            blobs,
            stripes,
            checker,
            detail,
            detail_freq,
        }
    }

    fn shade(&self, theta: f64, phi: f64) -> [f64; 3] {
        let (st, ct) = theta.sin_cos();
        let d = [ct * phi.sin(), st, ct * phi.cos()];
        let t = 0.5 + 0.5 * st;
        let mut c = [0, 1, 2].map(|i| self.ground[i] * (1.0 - t) + self.sky[i] * t);
        for (mu, kappa, col) in &self.blobs {
            let dot = d[0] * mu[0] + d[1] * mu[1] + d[2] * mu[2];
            let w = (kappa * (dot - 1.0)).exp();
            for i in 0..3 {
                c[i] = c[i] * (1.0 - w) + col[i] * w;
            }
        }
        for (axis, freq, phase, col) in &self.stripes {
            let dot = d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2];
            let w = 0.35 * (0.5 + 0.5 * (3.0 * (freq * dot + phase).sin()).tanh());
            for i in 0..3 {
                c[i] = c[i] * (1.0 - w) + col[i] * w;
            }
        }
        let (kp, kt, col) = &self.checker;
        let chk = (kp * phi).sin() * (kt * theta).sin();
        let w = 0.3 * (0.5 + 0.5 * (6.0 * chk).tanh());
        for i in 0..3 {
            c[i] = c[i] * (1.0 - w) + col[i] * w;
        }
        let n = fractal(self.seed ^ 0x51, d, 3.0, 5) - 0.5;
        for v in &mut c {
            *v += 0.25 * n;
        }
        if self.detail > 0.0 {
            for (i, v) in c.iter_mut().enumerate() {
                let hf = fractal(self.seed.wrapping_add(97 * (i as u64 + 1)), d, self.detail_freq, 3) - 0.5;
                *v += self.detail * hf;
            }
        }
        c.map(|v| v.clamp(0.0, 1.0))
    }
}

fn render(scene: &Scene, height: usize, width: usize) -> Image {
    let rows: Vec<Vec<[f64; 3]>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| {
                    let p = erp_to_sphere(ErpCoord::new(x as f64, y as f64), height, width);
                    scene.shade(p.theta, p.phi)
                })
                .collect()
        })
        .collect();
    Image::from_fn(height, width, |y, x| rows[y][x])
}

/// Smooth test panorama with gradients, blobs, stripes and a lat-long
/// checker pattern.
pub fn panorama(height: usize, width: usize, seed: u64) -> Image {
    render(&Scene::random(seed, 0.0, 0.0), height, width)
}

/// Panorama with additional fine texture whose frequency follows the raster
/// resolution, for rate-control experiments.
pub fn textured_panorama(height: usize, width: usize, seed: u64) -> Image {
    let freq = width as f64 / 24.0;
    render(&Scene::random(seed, 0.6, freq), height, width)
}

/// Independent uniform samples in `[0, 1)`.
pub fn noise_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(height, width, |_, _| [0; 3].map(|_| rng.random::<f64>()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panoramas_are_deterministic_and_in_range() {
        let a = panorama(16, 32, 1);
        assert_eq!(a, panorama(16, 32, 1));
        assert_ne!(a, panorama(16, 32, 2));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn panorama_is_seam_continuous() {
        let img = panorama(64, 128, 7);
        let mut seam = 0.0f64;
        let mut inner = 0.0f64;
        for y in 0..64 {
            for c in 0..3 {
                seam = seam.max((img.get(c, y, 127) - img.get(c, y, 0)).abs());
                inner = inner.max((img.get(c, y, 64) - img.get(c, y, 63)).abs());
            }
        }
        assert!(seam < 3.0 * inner + 1e-3, "seam {seam} inner {inner}");
    }
}
