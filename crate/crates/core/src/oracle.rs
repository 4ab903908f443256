//! Slow reference implementations used to verify the fast paths.
//!
//! Nothing here shares code with the module it checks: rays are built from
//! explicit rotation matrices, derivatives come from finite differences of
//! the continuous map, and convolutions are evaluated densely.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{forward_map, inverse_map, ViewportCoord, ViewportSpec};
use crate::image::Image;
use crate::resample::keys_cubic;

type Mat3 = [[f64; 3]; 3];

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn matvec(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

/// Camera-to-world rotation as an explicit matrix product.
pub fn rotation_matrix(theta_c: f64, phi_c: f64) -> Mat3 {
    let (st, ct) = theta_c.sin_cos();
    let (sp, cp) = phi_c.sin_cos();
    let pitch = [[1.0, 0.0, 0.0], [0.0, ct, st], [0.0, -st, ct]];
    let yaw = [[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]];
    matmul(&yaw, &pitch)
}

/// `(θ, φ)` of normalized viewport position `(un, vn) ∈ [-1, 1]²`
/// (`vn` grows downwards).
pub fn sphere_of_normalized(spec: &ViewportSpec, un: f64, vn: f64) -> (f64, f64) {
    let r = rotation_matrix(spec.theta_c, spec.phi_c);
    let d = matvec(
        &r,
        [un * (spec.fov_h / 2.0).tan(), -vn * (spec.fov_v / 2.0).tan(), 1.0],
    );
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    ((d[1] / n).asin(), d[0].atan2(d[2]))
}

fn normalized(spec: &ViewportSpec, y: ViewportCoord) -> (f64, f64) {
    (
        2.0 * (y.u + 0.5) / spec.width as f64 - 1.0,
        2.0 * (y.v + 0.5) / spec.height as f64 - 1.0,
    )
}

fn unwrap(d: f64) -> f64 {
    d - TAU * (d / TAU).round()
}

/// Longitudes of the nine stencil points (half-pixel offsets, row-major).
pub fn oracle_stencil_longitudes(spec: &ViewportSpec, y: ViewportCoord) -> [f64; 9] {
    let (un, vn) = normalized(spec, y);
    let mut out = [0.0; 9];
    for n in 0..3 {
        for m in 0..3 {
            let du = (m as f64 - 1.0) / spec.width as f64;
            let dv = (n as f64 - 1.0) / spec.height as f64;
            out[3 * n + m] = sphere_of_normalized(spec, un + du, vn + dv).1;
        }
    }
    out
}

const H1: f64 = 1e-5;
const H2: f64 = 1e-4;

/// First derivatives at `(un, vn)`: `[lon_u, lat_u, lon_v, lat_v]`, with the
/// cosine of the latitude applied to the longitude (`lon_weighted`) and/or
/// latitude (`lat_weighted`) components.
fn first(spec: &ViewportSpec, un: f64, vn: f64, lon_weighted: bool, lat_weighted: bool) -> [f64; 4] {
    let (t0, _) = sphere_of_normalized(spec, un, vn);
    let c = t0.cos();
    let wl = if lon_weighted { c } else { 1.0 };
    let wt = if lat_weighted { c } else { 1.0 };
    let (tp, pp) = sphere_of_normalized(spec, un + H1, vn);
    let (tm, pm) = sphere_of_normalized(spec, un - H1, vn);
    let lon_u = wl * unwrap(pp - pm) / (2.0 * H1);
    let lat_u = wt * (tp - tm) / (2.0 * H1);
    let (tp, pp) = sphere_of_normalized(spec, un, vn + H1);
    let (tm, pm) = sphere_of_normalized(spec, un, vn - H1);
    let lon_v = wl * unwrap(pp - pm) / (2.0 * H1);
    let lat_v = wt * (tp - tm) / (2.0 * H1);
    [lon_u, lat_u, lon_v, lat_v]
}

fn derivatives(spec: &ViewportSpec, y: ViewportCoord, lon_weighted: bool, lat_weighted: bool) -> [f64; 10] {
    let (un, vn) = normalized(spec, y);
    let j = first(spec, un, vn, lon_weighted, lat_weighted);
    let f = |du: f64, dv: f64| first(spec, un + du, vn + dv, lon_weighted, lat_weighted);
    let (up, um) = (f(H2, 0.0), f(-H2, 0.0));
    let (vp, vm) = (f(0.0, H2), f(0.0, -H2));
    let d = |a: f64, b: f64| (a - b) / (2.0 * H2);
    [
        j[0],
        j[1],
        j[2],
        j[3],
        d(up[0], um[0]),
        d(vp[0], vm[0]),
        d(vp[2], vm[2]),
        d(up[1], um[1]),
        d(vp[1], vm[1]),
        d(vp[3], vm[3]),
    ]
}

/// Reference for the default spherical descriptor: derivatives of the
/// locally metric sphere coordinates (`cos θ dφ`, `dθ`) with respect to
/// normalized viewport coordinates, in `ShapeDescriptor::flat` order.
pub fn metric_derivatives(spec: &ViewportSpec, y: ViewportCoord) -> [f64; 10] {
    derivatives(spec, y, true, false)
}

/// Reference for the literal variant with the cosine on the latitude term.
pub fn literal_derivatives(spec: &ViewportSpec, y: ViewportCoord) -> [f64; 10] {
    derivatives(spec, y, false, true)
}

/// `‖a - b‖₂ / ‖b‖₂`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    num.sqrt() / den.sqrt().max(1e-300)
}

/// Dense 2D convolution with the stretched Keys kernel; every output pixel
/// sums over the full `(4s+1)²` neighborhood with clamped (or wrapped)
/// indices and renormalized weights.
pub fn dense_bicubic_downscale(img: &Image, s: usize, wrap: bool) -> Image {
    let (h, w) = (img.height(), img.width());
    let sf = s as f64;
    let r = 2 * s as i64 + 1;
    Image::from_fn(h / s, w / s, |oy, ox| {
        let cy = sf * oy as f64 + (sf - 1.0) / 2.0;
        let cx = sf * ox as f64 + (sf - 1.0) / 2.0;
        let (iy, ix) = (cy.floor() as i64, cx.floor() as i64);
        let mut acc = [0.0; 3];
        let mut total = 0.0;
        for y in iy - r..=iy + r + 1 {
            for x in ix - r..=ix + r + 1 {
                let wgt = keys_cubic((y as f64 - cy) / sf) * keys_cubic((x as f64 - cx) / sf);
                if wgt == 0.0 {
                    continue;
                }
                let yy = y.clamp(0, h as i64 - 1) as usize;
                let xx = if wrap {
                    x.rem_euclid(w as i64) as usize
                } else {
                    x.clamp(0, w as i64 - 1) as usize
                };
                total += wgt;
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += wgt * img.get(c, yy, xx);
                }
            }
        }
        acc.map(|a| (a / total).clamp(0.0, 1.0))
    })
}

/// Brute-force inverse mapping: the position on a `grid_h × grid_w` ERP
/// lattice whose forward projection lands nearest to `y`. Returns the
/// lattice point in the coordinates of an `height × width` raster.
pub fn grid_search_inverse(
    spec: &ViewportSpec,
    y: ViewportCoord,
    grid_h: usize,
    grid_w: usize,
    height: usize,
    width: usize,
) -> (f64, f64) {
    let r = rotation_matrix(spec.theta_c, spec.phi_c);
    let (tx, ty) = ((spec.fov_h / 2.0).tan(), (spec.fov_v / 2.0).tan());
    let cols: Vec<(f64, f64)> = (0..grid_w)
        .map(|gx| (TAU * (gx as f64 + 0.5) / grid_w as f64 - PI).sin_cos())
        .collect();
    let mut best = (f64::MAX, 0usize, 0usize);
    for gy in 0..grid_h {
        let theta = PI / 2.0 - PI * (gy as f64 + 0.5) / grid_h as f64;
        let (st, ct) = theta.sin_cos();
        for (gx, &(sp, cp)) in cols.iter().enumerate() {
            let d = [ct * sp, st, ct * cp];
            // camera = Rᵀ · d
            let cz = r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2];
            if cz <= 0.0 {
                continue;
            }
            let cx = (r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2]) / cz;
            let cy = (r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2]) / cz;
            let u = (cx / tx + 1.0) * spec.width as f64 / 2.0 - 0.5;
            let v = (-cy / ty + 1.0) * spec.height as f64 / 2.0 - 0.5;
            let e = (u - y.u).powi(2) + (v - y.v).powi(2);
            if e < best.0 {
                best = (e, gy, gx);
            }
        }
    }
    (
        (best.2 as f64 + 0.5) * width as f64 / grid_w as f64 - 0.5,
        (best.1 as f64 + 0.5) * height as f64 / grid_h as f64 - 0.5,
    )
}

/// Random viewport with moderate fields of view.
pub fn random_spec<R: Rng>(rng: &mut R, max_side: usize) -> ViewportSpec {
    let theta = rng.random_range(-90.0..=90.0);
    let phi = rng.random_range(-180.0..180.0);
    let fh = rng.random_range(20.0..150.0);
    let fv = rng.random_range(20.0..150.0);
    let h = rng.random_range(2..=max_side);
    let w = rng.random_range(2..=max_side);
    ViewportSpec::from_degrees(theta, phi, fh, fv, h, w).expect("valid random spec")
}

/// Largest `|f(f⁻¹(y)) - y|` over the full pixel grids of `n_specs` random
/// viewports.
pub fn roundtrip_max_error(n_specs: usize, max_side: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (2048, 4096);
    let mut worst: f64 = 0.0;
    for _ in 0..n_specs {
        let spec = random_spec(&mut rng, max_side);
        for v in 0..spec.height {
            for u in 0..spec.width {
                let y = ViewportCoord::new(u as f64, v as f64);
                let x = inverse_map(&spec, y, h, w);
                match forward_map(&spec, x, h, w) {
                    Ok(y2) => worst = worst.max((y2.u - y.u).abs().max((y2.v - y.v).abs())),
                    Err(_) => return f64::INFINITY,
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{inverse_map_sphere, ViewportSpec};

    #[test]
    fn matrix_path_agrees_with_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let spec = random_spec(&mut rng, 40);
            let y = ViewportCoord::new(rng.random_range(0.0..spec.width as f64), 1.0);
            let (un, vn) = normalized(&spec, y);
            let (t, p) = sphere_of_normalized(&spec, un, vn);
            let s = inverse_map_sphere(&spec, y);
            assert!((t - s.theta).abs() < 1e-12);
            assert!(unwrap(p - s.phi).abs() < 1e-12 || t.abs() > PI / 2.0 - 1e-9);
        }
    }

    #[test]
    fn corner_ray_of_square_forward_view() {
        let spec = ViewportSpec::from_degrees(0.0, 0.0, 90.0, 90.0, 16, 16).unwrap();
        // continuous top-left corner
        let d = spec.ray(ViewportCoord::new(-0.5, -0.5));
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let want = [-1.0, 1.0, 1.0].map(|c: f64| c / 3f64.sqrt());
        for i in 0..3 {
            assert!((d[i] / n - want[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_map_agrees_with_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (h, w) = (256, 512);
        let (gh, gw) = (4096, 8192);
        for _ in 0..2 {
            let spec = ViewportSpec::from_degrees(
                rng.random_range(-60.0..60.0),
                rng.random_range(-180.0..180.0),
                90.0,
                80.0,
                32,
                40,
            )
            .unwrap();
            let y = ViewportCoord::new(rng.random_range(0.0..40.0), rng.random_range(0.0..32.0));
            let x = inverse_map(&spec, y, h, w);
            let (gx, gy) = grid_search_inverse(&spec, y, gh, gw, h, w);
            let cell_x = w as f64 / gw as f64;
            let cell_y = h as f64 / gh as f64;
            let dx = (x.x1 - gx).rem_euclid(w as f64);
            let dx = dx.min(w as f64 - dx);
            assert!(dx <= cell_x && (x.x2 - gy).abs() <= cell_y, "{dx} {}", x.x2 - gy);
        }
    }

    #[test]
    fn dense_downscale_of_constant() {
        let img = Image::filled(8, 8, [0.5; 3]);
        let out = dense_bicubic_downscale(&img, 2, false);
        assert!(out.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }
}
