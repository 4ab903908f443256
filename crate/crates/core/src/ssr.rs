//! Spherical pixel-shape descriptors.
//!
//! The shape of a query point is summarized by first and second derivatives
//! of the viewport-to-sphere map `y ↦ (θ, φ)`, estimated with central
//! differences on a 3×3 stencil of half-pixel offsets around `y`. Distances
//! between stencil points are measured on the sphere: longitude differences
//! take the minor arc across the `±π` seam and are scaled by the cosine of
//! the mean latitude.
//!
//! Stencil numbering is row-major with `p5` at the center:
//!
//! ```text
//!   p1 p2 p3        (u-, v-) (u, v-) (u+, v-)
//!   p4 p5 p6   =    (u-, v ) (u, v ) (u+, v )
//!   p7 p8 p9        (u-, v+) (u, v+) (u+, v+)
//! ```

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use crate::geometry::{erp_to_sphere, inverse_map, SphericalCoord, ViewportCoord, ViewportSpec};

/// Where the cosine-of-mean-latitude factor is applied in [`sphere_diff`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CosPlacement {
    /// On the longitude component (arc length along a parallel).
    #[default]
    Longitude,
    /// On the latitude component, as the distance formula is printed.
    Latitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsrOptions {
    pub cos: CosPlacement,
    /// Divide by the stencil step so entries are derivatives with respect to
    /// normalized viewport coordinates. When unset the raw stencil sums are
    /// returned.
    pub normalize_steps: bool,
}

impl Default for SsrOptions {
    fn default() -> Self {
        Self {
            cos: CosPlacement::Longitude,
            normalize_steps: true,
        }
    }
}

/// Jacobian and Hessian estimates of the viewport-to-sphere map at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShapeDescriptor {
    /// `jac[0]` is the derivative along `u`, `jac[1]` along `v`; each holds
    /// `(longitude, latitude)` components.
    pub jac: [[f64; 2]; 2],
    /// `[lon_uu, lon_uv, lon_vv, lat_uu, lat_uv, lat_vv]`.
    pub hess: [f64; 6],
}

impl ShapeDescriptor {
    pub const LEN: usize = 10;

    /// Row-major Jacobian followed by the six Hessian entries.
    pub fn flat(&self) -> [f64; 10] {
        let j = self.jac;
        let h = self.hess;
        [
            j[0][0], j[0][1], j[1][0], j[1][1], h[0], h[1], h[2], h[3], h[4], h[5],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }
}

/// Signed minor-arc angle difference, `Δ - 2π·round(Δ / 2π)`.
#[inline]
pub fn wrap_diff(delta: f64) -> f64 {
    delta - TAU * (delta / TAU).round()
}

/// Spherical difference `D(p_i, p_j)` from `p_i` to `p_j` as
/// `(longitude, latitude)` components.
#[inline]
pub fn sphere_diff(pi: SphericalCoord, pj: SphericalCoord, cos: CosPlacement) -> [f64; 2] {
    let dphi = wrap_diff(pj.phi - pi.phi);
    let dtheta = wrap_diff(pj.theta - pi.theta);
    let c = ((pi.theta + pj.theta) / 2.0).cos();
    match cos {
        CosPlacement::Longitude => [dphi * c, dtheta],
        CosPlacement::Latitude => [dphi, dtheta * c],
    }
}

/// Sphere images of `y` and its eight neighbors, `p1..p9` row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereStencil {
    pub points: [SphericalCoord; 9],
}

impl SphereStencil {
    /// `p_k` with the 1-based numbering of the module docs.
    #[inline]
    pub fn p(&self, k: usize) -> SphericalCoord {
        self.points[k - 1]
    }
}

/// Viewport positions of the stencil. Offsets are `±1/w_v`, `±1/h_v` in
/// normalized viewport units, i.e. half a pixel.
pub fn stencil_positions(y: ViewportCoord) -> [ViewportCoord; 9] {
    let mut out = [y; 9];
    for n in 0..3 {
        for m in 0..3 {
            out[3 * n + m] = ViewportCoord::new(
                y.u + 0.5 * (m as f64 - 1.0),
                y.v + 0.5 * (n as f64 - 1.0),
            );
        }
    }
    out
}

pub fn build_stencil(spec: &ViewportSpec, y: ViewportCoord, height: usize, width: usize) -> SphereStencil {
    let pos = stencil_positions(y);
    let points = pos.map(|q| erp_to_sphere(inverse_map(spec, q, height, width), height, width));
    SphereStencil { points }
}

/// Assembles the central-difference estimates from any antisymmetric
/// difference `d(p_i, p_j)` over stencil points.
fn assemble<P: Copy>(
    pts: &[P; 9],
    d: impl Fn(P, P) -> [f64; 2],
    spec: &ViewportSpec,
    normalize: bool,
) -> ShapeDescriptor {
    let p = |k: usize| pts[k - 1];
    let add = |a: [f64; 2], b: [f64; 2]| [a[0] + b[0], a[1] + b[1]];
    let ju = d(p(4), p(6));
    let jv = d(p(2), p(8));
    let huu = add(d(p(5), p(6)), d(p(5), p(4)));
    let hvv = add(d(p(5), p(2)), d(p(5), p(8)));
    let huv = add(d(p(3), p(1)), d(p(7), p(9)));
    let (wv, hv) = (spec.width as f64, spec.height as f64);
    let (sju, sjv, suu, svv, suv) = if normalize {
        (wv / 2.0, hv / 2.0, wv * wv, hv * hv, wv * hv / 4.0)
    } else {
        (1.0, 1.0, 1.0, 1.0, 1.0)
    };
    ShapeDescriptor {
        jac: [[ju[0] * sju, ju[1] * sju], [jv[0] * sjv, jv[1] * sjv]],
        hess: [
            huu[0] * suu,
            huv[0] * suv,
            hvv[0] * svv,
            huu[1] * suu,
            huv[1] * suv,
            hvv[1] * svv,
        ],
    }
}

/// Spherical pixel-shape descriptor of viewport position `y`.
pub fn shape_at(
    spec: &ViewportSpec,
    y: ViewportCoord,
    height: usize,
    width: usize,
    opts: SsrOptions,
) -> ShapeDescriptor {
    let st = build_stencil(spec, y, height, width);
    assemble(&st.points, |a, b| sphere_diff(a, b, opts.cos), spec, opts.normalize_steps)
}

/// Descriptors for every viewport pixel center, row-major.
pub fn shape_grid(spec: &ViewportSpec, height: usize, width: usize, opts: SsrOptions) -> Vec<ShapeDescriptor> {
    (0..spec.pixel_count())
        .into_par_iter()
        .map(|i| {
            let y = ViewportCoord::new((i % spec.width) as f64, (i / spec.width) as f64);
            shape_at(spec, y, height, width, opts)
        })
        .collect()
}

/// Planar shape descriptor: the same stencil arithmetic on raw ERP
/// positions, without the sphere transform or seam handling. Positions are
/// expressed in radian-sized units (`x1·2π/W`, `-x2·π/H`) so that entries
/// are directly comparable with [`shape_at`].
pub fn shape_2d_baseline(
    spec: &ViewportSpec,
    y: ViewportCoord,
    height: usize,
    width: usize,
    normalize_steps: bool,
) -> ShapeDescriptor {
    let pos = stencil_positions(y);
    let pts = pos.map(|q| {
        let x = inverse_map(spec, q, height, width);
        [x.x1 * TAU / width as f64, -x.x2 * PI / height as f64]
    });
    assemble(&pts, |a, b| [b[0] - a[0], b[1] - a[1]], spec, normalize_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const H: usize = 512;
    const W: usize = 1024;

    #[test]
    fn equator_difference() {
        let a = SphericalCoord::new(0.0, 0.0);
        let b = SphericalCoord::new(0.0, 0.1);
        let d = sphere_diff(a, b, CosPlacement::Longitude);
        assert_abs_diff_eq!(d[0], 0.1, epsilon = 1e-15);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn difference_takes_minor_arc() {
        let a = SphericalCoord::new(0.0, PI - 0.05);
        let b = SphericalCoord::new(0.0, -PI + 0.05);
        for cos in [CosPlacement::Longitude, CosPlacement::Latitude] {
            let d = sphere_diff(a, b, cos);
            assert_abs_diff_eq!(d[0].abs(), 0.1, epsilon = 1e-12);
            assert!(d[0] > 0.0);
        }
    }

    #[test]
    fn as_written_scales_latitude() {
        let a = SphericalCoord::new(PI / 3.0 - 0.1, 0.0);
        let b = SphericalCoord::new(PI / 3.0 + 0.1, 0.0);
        let d = sphere_diff(a, b, CosPlacement::Latitude);
        assert_abs_diff_eq!(d[1], 0.2 * (PI / 3.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn center_stencil_of_forward_view_is_symmetric() {
        let spec = ViewportSpec::from_degrees(0.0, 0.0, 90.0, 90.0, 64, 64).unwrap();
        let y = ViewportCoord::new(31.5, 31.5);
        let st = build_stencil(&spec, y, H, W);
        let d = sphere_diff(st.p(6), st.p(4), CosPlacement::Longitude);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-15);
        let center = erp_to_sphere(inverse_map(&spec, y, H, W), H, W);
        assert_eq!(st.p(5), center);
        let s = shape_at(&spec, y, H, W, SsrOptions::default());
        assert_abs_diff_eq!(s.jac[0][1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.jac[1][0], 0.0, epsilon = 1e-6);
        assert!(s.jac[0][0] > 0.0 && s.jac[1][1] < 0.0);
    }

    #[test]
    fn pole_facing_stencil_has_distinct_longitudes() {
        let spec = ViewportSpec::from_degrees(90.0, 0.0, 90.0, 90.0, 32, 32).unwrap();
        let y = ViewportCoord::new(12.0, 10.0);
        let st = build_stencil(&spec, y, H, W);
        let mut lons: Vec<f64> = st.points.iter().map(|p| p.phi).collect();
        lons.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in lons.windows(2) {
            assert!(w[1] - w[0] > 1e-6, "{lons:?}");
        }
        assert!(lons[8] - lons[0] > 0.1, "{lons:?}");
        let o = oracle::oracle_stencil_longitudes(&spec, y);
        for (a, b) in st.points.iter().zip(o) {
            assert_abs_diff_eq!(wrap_diff(a.phi - b), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn unnormalized_is_raw_stencil_sum() {
        let spec = ViewportSpec::from_degrees(20.0, 40.0, 100.0, 80.0, 48, 64).unwrap();
        let y = ViewportCoord::new(10.0, 30.0);
        let raw = shape_at(&spec, y, H, W, SsrOptions { normalize_steps: false, ..Default::default() });
        let norm = shape_at(&spec, y, H, W, SsrOptions::default());
        assert_abs_diff_eq!(norm.jac[0][0], raw.jac[0][0] * 32.0, epsilon = 1e-12);
        assert_abs_diff_eq!(norm.hess[2], raw.hess[2] * 48.0 * 48.0, epsilon = 1e-9);
        let st = build_stencil(&spec, y, H, W);
        let j = sphere_diff(st.p(4), st.p(6), CosPlacement::Longitude);
        assert_eq!(raw.jac[0], j);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let spec = ViewportSpec::from_degrees(35.0, -70.0, 100.0, 90.0, 64, 80).unwrap();
        for &(u, v) in &[(3.0, 5.0), (40.0, 31.0), (70.0, 60.0)] {
            let y = ViewportCoord::new(u, v);
            let est = shape_at(&spec, y, H, W, SsrOptions::default());
            let truth = oracle::metric_derivatives(&spec, y);
            assert!(oracle::rel_err(&est.flat()[..4], &truth[..4]) < 1e-3);
            assert!(oracle::rel_err(&est.flat()[4..], &truth[4..]) < 1e-2);
        }
    }

    #[test]
    fn grid_matches_pointwise() {
        let spec = ViewportSpec::from_degrees(-60.0, 175.0, 90.0, 90.0, 7, 9).unwrap();
        let grid = shape_grid(&spec, H, W, SsrOptions::default());
        assert_eq!(grid.len(), 63);
        for (i, s) in grid.iter().enumerate() {
            let y = ViewportCoord::new((i % 9) as f64, (i / 9) as f64);
            assert_eq!(*s, shape_at(&spec, y, H, W, SsrOptions::default()));
            assert!(s.is_finite());
        }
    }

    #[test]
    fn planar_descriptor_breaks_at_seam() {
        let spec = ViewportSpec::from_degrees(0.0, 180.0, 90.0, 90.0, 64, 64).unwrap();
        // the center column straddles the seam
        let y = ViewportCoord::new(31.5, 20.0);
        let sph = shape_at(&spec, y, H, W, SsrOptions::default());
        let flat = shape_2d_baseline(&spec, y, H, W, true);
        assert!(sph.jac[0][0].abs() < 2.0);
        assert!(flat.jac[0][0].abs() > 50.0);
    }

    proptest! {
        #[test]
        fn difference_is_antisymmetric(t1 in -1.5f64..1.5, p1 in -3.14f64..3.14, t2 in -1.5f64..1.5, p2 in -3.14f64..3.14) {
            let a = SphericalCoord::new(t1, p1);
            let b = SphericalCoord::new(t2, p2);
            for cos in [CosPlacement::Longitude, CosPlacement::Latitude] {
                let x = sphere_diff(a, b, cos);
                let y = sphere_diff(b, a, cos);
                prop_assert_eq!(x[0], -y[0]);
                prop_assert_eq!(x[1], -y[1]);
                prop_assert!(wrap_diff(p2 - p1).abs() <= PI);
                prop_assert!(wrap_diff(t2 - t1).abs() <= PI);
            }
        }

        #[test]
        fn descriptor_is_roll_invariant(
            theta in -85.0f64..85.0,
            phi in -180.0f64..180.0,
            shift in -3.0f64..3.0,
            u in 0usize..24,
            v in 0usize..16,
        ) {
            let spec = ViewportSpec::from_degrees(theta, phi, 100.0, 80.0, 16, 24).unwrap();
            let rolled = spec.with_phi_shift(shift);
            let y = ViewportCoord::new(u as f64, v as f64);
            let a = shape_at(&spec, y, H, W, SsrOptions::default()).flat();
            let b = shape_at(&rolled, y, H, W, SsrOptions::default()).flat();
            for (x, z) in a.iter().zip(b.iter()) {
                prop_assert!((x - z).abs() < 1e-9, "{} vs {}", x, z);
            }
        }
    }
}
