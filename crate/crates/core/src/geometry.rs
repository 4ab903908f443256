//! Coordinate systems for equirectangular panoramas and the gnomonic
//! (rectilinear) viewport mapping between them.
//!
//! Conventions used throughout the crate:
//!
//! * ERP pixel centers sit on integer coordinates. Column `x1` spans
//!   longitude `[-π, π)` left to right, row `x2` spans latitude
//!   `[π/2, -π/2]` top to bottom. The poles lie on the raster edges
//!   `x2 = -0.5` and `x2 = H - 0.5`.
//! * World frame: `+z` looks at `(θ, φ) = (0, 0)`, `+y` is up, `+x` points
//!   towards `φ = +π/2`.
//! * A viewport looks along `R_yaw(φc) · R_pitch(θc) · (0, 0, 1)` with no
//!   roll. Viewport pixel centers sit on integer `(u, v)`; `v` grows
//!   downwards.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};

/// Latitude `theta` and longitude `phi`, both in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    pub theta: f64,
    pub phi: f64,
}

impl SphericalCoord {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    /// Unit direction vector in the world frame.
    pub fn to_unit(self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [ct * sp, st, ct * cp]
    }

    /// Inverse of [`SphericalCoord::to_unit`]. The vector need not be
    /// normalized. Poles come back with `phi = 0`.
    pub fn from_vector(d: [f64; 3]) -> Self {
        let horiz = d[0].hypot(d[2]);
        let theta = d[1].atan2(horiz);
        let phi = if horiz == 0.0 { 0.0 } else { d[0].atan2(d[2]) };
        let phi = if phi >= PI { phi - TAU } else { phi };
        Self { theta, phi }
    }
}

/// Continuous position on an ERP raster (pixel centers at integers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErpCoord {
    pub x1: f64,
    pub x2: f64,
}

impl ErpCoord {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }
}

/// Continuous position on a viewport raster (pixel centers at integers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewportCoord {
    pub u: f64,
    pub v: f64,
}

impl ViewportCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// View direction, fields of view and output raster of a perspective
/// viewport. Angles are radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewportSpec {
    pub theta_c: f64,
    pub phi_c: f64,
    pub fov_h: f64,
    pub fov_v: f64,
    pub height: usize,
    pub width: usize,
}

impl ViewportSpec {
    pub fn new(
        theta_c: f64,
        phi_c: f64,
        fov_h: f64,
        fov_v: f64,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let spec = Self {
            theta_c,
            phi_c,
            fov_h,
            fov_v,
            height,
            width,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same as [`ViewportSpec::new`] with angles given in degrees.
    pub fn from_degrees(
        theta_deg: f64,
        phi_deg: f64,
        fov_h_deg: f64,
        fov_v_deg: f64,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        Self::new(
            theta_deg.to_radians(),
            phi_deg.to_radians(),
            fov_h_deg.to_radians(),
            fov_v_deg.to_radians(),
            height,
            width,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fov_ok = |f: f64| f.is_finite() && f > 0.0 && f < PI;
        if !fov_ok(self.fov_h) || !fov_ok(self.fov_v) {
            return Err(Error::InvalidViewport(format!(
                "fields of view must lie in (0, π), got ({}, {})",
                self.fov_h, self.fov_v
            )));
        }
        if self.height < 2 || self.width < 2 {
            return Err(Error::InvalidViewport(format!(
                "viewport must be at least 2x2, got {}x{}",
                self.height, self.width
            )));
        }
        if !self.theta_c.is_finite()
            || !self.phi_c.is_finite()
            || self.theta_c.abs() > FRAC_PI_2
        {
            return Err(Error::InvalidViewport(format!(
                "view direction out of range: ({}, {})",
                self.theta_c, self.phi_c
            )));
        }
        Ok(())
    }

    /// Half-extent of the image plane at `z = 1`.
    pub fn plane_half_extent(&self) -> (f64, f64) {
        ((self.fov_h / 2.0).tan(), (self.fov_v / 2.0).tan())
    }

    pub fn center(&self) -> ViewportCoord {
        ViewportCoord::new(
            self.width as f64 / 2.0 - 0.5,
            self.height as f64 / 2.0 - 0.5,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// The same view rotated in longitude by `delta_phi`, wrapped into `[-π, π)`.
    pub fn with_phi_shift(&self, delta_phi: f64) -> Self {
        Self {
            phi_c: wrap_angle(self.phi_c + delta_phi),
            ..*self
        }
    }

    /// Camera-to-world rotation `R_yaw(φc) · R_pitch(θc)`.
    fn rotate_to_world(&self, d: [f64; 3]) -> [f64; 3] {
        let (st, ct) = self.theta_c.sin_cos();
        let (sp, cp) = self.phi_c.sin_cos();
        // pitch about +x
        let y1 = d[1] * ct + d[2] * st;
        let z1 = -d[1] * st + d[2] * ct;
        let x1 = d[0];
        // yaw about +y
        [x1 * cp + z1 * sp, y1, -x1 * sp + z1 * cp]
    }

    fn rotate_to_camera(&self, d: [f64; 3]) -> [f64; 3] {
        let (st, ct) = self.theta_c.sin_cos();
        let (sp, cp) = self.phi_c.sin_cos();
        let x1 = d[0] * cp - d[2] * sp;
        let z1 = d[0] * sp + d[2] * cp;
        let y1 = d[1];
        [x1, y1 * ct - z1 * st, y1 * st + z1 * ct]
    }

    /// World-frame ray (not normalized) through a viewport position.
    pub fn ray(&self, y: ViewportCoord) -> [f64; 3] {
        let (tx, ty) = self.plane_half_extent();
        let px = (2.0 * (y.u + 0.5) / self.width as f64 - 1.0) * tx;
        let py = -(2.0 * (y.v + 0.5) / self.height as f64 - 1.0) * ty;
        self.rotate_to_world([px, py, 1.0])
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

pub fn erp_to_sphere(c: ErpCoord, height: usize, width: usize) -> SphericalCoord {
    let phi = TAU * (c.x1 + 0.5) / width as f64 - PI;
    let theta = FRAC_PI_2 - PI * (c.x2 + 0.5) / height as f64;
    SphericalCoord { theta, phi }
}

/// Exact inverse of [`erp_to_sphere`], with `x1` wrapped into `[0, W)`.
pub fn sphere_to_erp(p: SphericalCoord, height: usize, width: usize) -> ErpCoord {
    let w = width as f64;
    let mut x1 = ((p.phi + PI) * w / TAU - 0.5).rem_euclid(w);
    if x1 >= w {
        x1 -= w;
    }
    let x2 = (FRAC_PI_2 - p.theta) * height as f64 / PI - 0.5;
    ErpCoord { x1, x2 }
}

/// `f`: ERP position to viewport position.
pub fn forward_map(
    spec: &ViewportSpec,
    c: ErpCoord,
    height: usize,
    width: usize,
) -> Result<ViewportCoord> {
    let d = spec.rotate_to_camera(erp_to_sphere(c, height, width).to_unit());
    if d[2] <= 0.0 {
        return Err(Error::BehindViewport);
    }
    let (tx, ty) = spec.plane_half_extent();
    let px = d[0] / d[2];
    let py = d[1] / d[2];
    let u = (px / tx + 1.0) * spec.width as f64 / 2.0 - 0.5;
    let v = (-py / ty + 1.0) * spec.height as f64 / 2.0 - 0.5;
    Ok(ViewportCoord { u, v })
}

/// Sphere position of a viewport position.
pub fn inverse_map_sphere(spec: &ViewportSpec, y: ViewportCoord) -> SphericalCoord {
    SphericalCoord::from_vector(spec.ray(y))
}

/// `f⁻¹`: viewport position to ERP position. Total: every viewport
/// position, including ones outside the raster, has a ray.
pub fn inverse_map(spec: &ViewportSpec, y: ViewportCoord, height: usize, width: usize) -> ErpCoord {
    sphere_to_erp(inverse_map_sphere(spec, y), height, width)
}

/// Every viewport pixel center (row-major) paired with its ERP position.
pub fn viewport_grid(
    spec: &ViewportSpec,
    height: usize,
    width: usize,
) -> Vec<(ViewportCoord, ErpCoord)> {
    let mut out = Vec::with_capacity(spec.pixel_count());
    for v in 0..spec.height {
        for u in 0..spec.width {
            let y = ViewportCoord::new(u as f64, v as f64);
            out.push((y, inverse_map(spec, y, height, width)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const H: usize = 256;
    const W: usize = 512;

    #[test]
    fn image_center_is_origin() {
        let p = erp_to_sphere(ErpCoord::new(W as f64 / 2.0 - 0.5, H as f64 / 2.0 - 0.5), H, W);
        assert_abs_diff_eq!(p.theta, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.phi, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn left_edge_is_minus_pi() {
        let p = erp_to_sphere(ErpCoord::new(-0.5, H as f64 / 2.0 - 0.5), H, W);
        assert_abs_diff_eq!(p.theta, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.phi, -PI, epsilon = 1e-15);
    }

    #[test]
    fn origin_maps_to_center() {
        let c = sphere_to_erp(SphericalCoord::new(0.0, 0.0), H, W);
        assert_abs_diff_eq!(c.x1, W as f64 / 2.0 - 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.x2, H as f64 / 2.0 - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn poles_sit_on_raster_edges() {
        let north = sphere_to_erp(SphericalCoord::new(FRAC_PI_2, 1.234), H, W);
        assert_abs_diff_eq!(north.x2, -0.5, epsilon = 1e-12);
        let south = sphere_to_erp(SphericalCoord::new(-FRAC_PI_2, -2.0), H, W);
        assert_abs_diff_eq!(south.x2, H as f64 - 0.5, epsilon = 1e-12);
        // a pole ray comes back with the canonical longitude
        let p = SphericalCoord::from_vector([0.0, 1.0, 0.0]);
        assert_eq!(p.phi, 0.0);
        assert_eq!(p.theta, FRAC_PI_2);
    }

    #[test]
    fn longitude_wraps_into_raster() {
        let c = sphere_to_erp(SphericalCoord::new(0.0, PI - 1e-9), H, W);
        assert!(c.x1 < W as f64 && c.x1 >= 0.0);
        let c = sphere_to_erp(SphericalCoord::new(0.0, -PI), H, W);
        assert!(c.x1 < W as f64 && c.x1 >= 0.0);
        let c = sphere_to_erp(SphericalCoord::new(0.0, -PI - 1e-18), H, W);
        assert!(c.x1 < W as f64 && c.x1 >= 0.0);
    }

    #[test]
    fn view_direction_projects_to_center() {
        let spec = ViewportSpec::from_degrees(30.0, -120.0, 90.0, 70.0, 48, 64).unwrap();
        let c = sphere_to_erp(SphericalCoord::new(spec.theta_c, spec.phi_c), H, W);
        let y = forward_map(&spec, c, H, W).unwrap();
        let center = spec.center();
        assert_abs_diff_eq!(y.u, center.u, epsilon = 1e-9);
        assert_abs_diff_eq!(y.v, center.v, epsilon = 1e-9);
        let back = inverse_map(&spec, center, H, W);
        assert_abs_diff_eq!(back.x1, c.x1, epsilon = 1e-9);
        assert_abs_diff_eq!(back.x2, c.x2, epsilon = 1e-9);
    }

    #[test]
    fn top_edge_reaches_half_vertical_fov() {
        let spec = ViewportSpec::from_degrees(0.0, 0.0, 100.0, 80.0, 40, 64).unwrap();
        let top = ViewportCoord::new(spec.width as f64 / 2.0 - 0.5, -0.5);
        let p = inverse_map_sphere(&spec, top);
        assert_abs_diff_eq!(p.theta, 40f64.to_radians(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.phi, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn behind_viewport_is_rejected() {
        let spec = ViewportSpec::from_degrees(0.0, 0.0, 90.0, 90.0, 32, 32).unwrap();
        let back = sphere_to_erp(SphericalCoord::new(0.0, PI - 0.1), H, W);
        assert!(matches!(forward_map(&spec, back, H, W), Err(Error::BehindViewport)));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ViewportSpec::from_degrees(0.0, 0.0, 180.0, 90.0, 8, 8).is_err());
        assert!(ViewportSpec::from_degrees(0.0, 0.0, 90.0, 0.0, 8, 8).is_err());
        assert!(ViewportSpec::from_degrees(0.0, 0.0, 90.0, 90.0, 1, 8).is_err());
        assert!(ViewportSpec::from_degrees(91.0, 0.0, 90.0, 90.0, 8, 8).is_err());
    }

    #[test]
    fn grid_has_one_entry_per_pixel() {
        let spec = ViewportSpec::from_degrees(80.0, 10.0, 120.0, 100.0, 17, 23).unwrap();
        let grid = viewport_grid(&spec, H, W);
        assert_eq!(grid.len(), 17 * 23);
        for (y, x) in &grid {
            let p = erp_to_sphere(*x, H, W);
            assert!(p.theta.abs() <= FRAC_PI_2 + 1e-12);
            let again = inverse_map(&spec, *y, H, W);
            assert_eq!(again, *x);
        }
    }

    #[test]
    fn wider_fov_spans_more_longitude() {
        let span = |fov: f64| {
            let spec = ViewportSpec::from_degrees(0.0, 0.0, fov, 60.0, 16, 32).unwrap();
            let grid = viewport_grid(&spec, H, W);
            let lo = grid.iter().map(|g| g.1.x1).fold(f64::MAX, f64::min);
            let hi = grid.iter().map(|g| g.1.x1).fold(f64::MIN, f64::max);
            hi - lo
        };
        let mut prev = 0.0;
        for fov in [30.0, 60.0, 90.0, 120.0, 150.0] {
            let s = span(fov);
            assert!(s > prev, "fov {fov}: {s} <= {prev}");
            prev = s;
        }
    }

    proptest! {
        #[test]
        fn erp_sphere_roundtrip(x1 in 0.0..(W as f64), x2 in -0.5..(H as f64 - 0.5)) {
            let c = ErpCoord::new(x1, x2);
            let back = sphere_to_erp(erp_to_sphere(c, H, W), H, W);
            prop_assert!((back.x1 - x1).abs() < 1e-12 || (back.x1 - x1).abs() > W as f64 - 1e-12);
            prop_assert!((back.x2 - x2).abs() < 1e-12);
        }

        #[test]
        fn viewport_roundtrip(
            theta in -90.0f64..90.0,
            phi in -180.0f64..180.0,
            fh in 10.0f64..170.0,
            fv in 10.0f64..170.0,
            fu in 0.0f64..1.0,
            fvv in 0.0f64..1.0,
        ) {
            let spec = ViewportSpec::from_degrees(theta, phi, fh, fv, 37, 53).unwrap();
            let y = ViewportCoord::new(fu * 53.0 - 0.5, fvv * 37.0 - 0.5);
            let x = inverse_map(&spec, y, H, W);
            let y2 = forward_map(&spec, x, H, W).unwrap();
            prop_assert!((y2.u - y.u).abs() < 1e-9);
            prop_assert!((y2.v - y.v).abs() < 1e-9);
        }

        #[test]
        fn longitude_roll_equivariance(
            theta in -60.0f64..60.0,
            phi in -180.0f64..180.0,
            k in 1usize..W,
        ) {
            let spec = ViewportSpec::from_degrees(theta, phi, 90.0, 70.0, 9, 11).unwrap();
            let shifted = spec.with_phi_shift(-TAU * k as f64 / W as f64);
            for v in 0..9 {
                for u in 0..11 {
                    let y = ViewportCoord::new(u as f64, v as f64);
                    let a = inverse_map(&spec, y, H, W);
                    let b = inverse_map(&shifted, y, H, W);
                    let d = (a.x1 - k as f64 - b.x1).rem_euclid(W as f64);
                    let d = d.min(W as f64 - d);
                    prop_assert!(d < 1e-9, "column mismatch {}", d);
                    prop_assert!((a.x2 - b.x2).abs() < 1e-9);
                }
            }
        }
    }
}
