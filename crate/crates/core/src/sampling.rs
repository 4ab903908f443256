//! Discrete pixel sampling.
//!
//! A square HR training patch and a perspective viewport never share a
//! rectangular footprint. The sampler keeps the ERP patch rectangular (so
//! its downscaled version can supervise the downsampler) and instead
//! collects the viewport pixels whose ERP positions fall inside the patch,
//! producing point supervision in normalized patch coordinates.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{erp_to_sphere, viewport_grid, ErpCoord, ViewportCoord, ViewportSpec};
use crate::image::Image;
use crate::resample::{bicubic_downscale, crop_patch, sample_at, Kernel};

/// Full-scale number of supervision points per patch.
pub const DEFAULT_SAMPLE_COUNT: usize = 25_600;

/// Field-of-view choices (degrees) used when drawing training viewports.
pub const FOV_CHOICES_DEG: [f64; 5] = [80.0, 90.0, 100.0, 110.0, 120.0];

/// Viewport resolution choices used when drawing training viewports.
pub const RESOLUTION_CHOICES: [usize; 7] = [512, 576, 640, 768, 832, 960, 1024];

/// Placement of a square training patch on an ERP image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    /// Left column (may wrap around the seam).
    pub a: usize,
    /// Top row.
    pub b: usize,
    /// Side length in HR pixels.
    pub p: usize,
    /// Downscale factor.
    pub s: usize,
}

impl PatchSpec {
    pub fn new(a: usize, b: usize, p: usize, s: usize) -> Result<Self> {
        if p == 0 || s == 0 || p % s != 0 {
            return Err(Error::InvalidArgument(format!(
                "patch size {p} must be positive and divisible by scale {s}"
            )));
        }
        Ok(Self { a, b, p, s })
    }

    /// HR position of the patch center (wrapped into `[0, W)`).
    pub fn center(&self, width: usize) -> ErpCoord {
        let half = (self.p as f64 - 1.0) / 2.0;
        ErpCoord::new((self.a as f64 + half).rem_euclid(width as f64), self.b as f64 + half)
    }

    /// Column of `x1` relative to the patch origin, following the seam.
    #[inline]
    fn unwrap_column(&self, x1: f64, width: usize) -> f64 {
        if x1 >= self.a as f64 {
            x1
        } else {
            x1 + width as f64
        }
    }

    #[inline]
    fn contains_unwrapped(&self, x1: f64, x2: f64) -> bool {
        let (a, b, p) = (self.a as f64, self.b as f64, self.p as f64);
        a <= x1 && x1 < a + p && b <= x2 && x2 < b + p
    }
}

/// Point supervision for one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// Normalized patch coordinates in `[-1, 1)²`, `(horizontal, vertical)`.
    pub coords: Vec<[f64; 2]>,
    /// Ground-truth RGB at each coordinate.
    pub pixels: Vec<[f64; 3]>,
    /// Viewport pixel each sample came from.
    pub view_coords: Vec<ViewportCoord>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Indices of the points inside the half-open patch bounds, in input order.
pub fn filter_indices(points: &[ErpCoord], ps: &PatchSpec, width: usize) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, x)| ps.contains_unwrapped(ps.unwrap_column(x.x1, width), x.x2))
        .map(|(i, _)| i)
        .collect()
}

/// Keeps the points with `a ≤ x1 < a+p` and `b ≤ x2 < b+p`. For patches
/// that cross the seam the retained columns are returned unwrapped, i.e. in
/// `[a, a+p)` even when `a + p > W`.
pub fn filter_with_bounds(points: &[ErpCoord], ps: &PatchSpec, width: usize) -> Vec<ErpCoord> {
    filter_indices(points, ps, width)
        .into_iter()
        .map(|i| ErpCoord::new(ps.unwrap_column(points[i].x1, width), points[i].x2))
        .collect()
}

/// `T(x) = 2 (x - (a, b)) / p - 1`, applied to already-filtered points.
pub fn coord_space_transform(points: &[ErpCoord], ps: &PatchSpec) -> Result<Vec<[f64; 2]>> {
    let (a, b, p) = (ps.a as f64, ps.b as f64, ps.p as f64);
    points
        .iter()
        .map(|x| {
            if !ps.contains_unwrapped(x.x1, x.x2) {
                return Err(Error::OutOfPatch { x1: x.x1, x2: x.x2 });
            }
            Ok([2.0 * ((x.x1 - a) / p) - 1.0, 2.0 * ((x.x2 - b) / p) - 1.0])
        })
        .collect()
}

/// Inverse of [`coord_space_transform`], in patch-local pixel units.
#[inline]
pub fn denormalize(c: [f64; 2], p: usize) -> ErpCoord {
    let p = p as f64;
    ErpCoord::new((c[0] + 1.0) * p / 2.0, (c[1] + 1.0) * p / 2.0)
}

/// Uniform sample of `n` distinct indices out of `len`, returned sorted.
/// Returns all indices when `len ≤ n`.
pub fn random_subsample<R: Rng + ?Sized>(len: usize, n: usize, rng: &mut R) -> Vec<usize> {
    if len <= n {
        return (0..len).collect();
    }
    let mut picked = index::sample(rng, len, n).into_vec();
    picked.sort_unstable();
    picked
}

/// Result of one discrete pixel sampling draw.
#[derive(Debug, Clone)]
pub struct DpsDraw {
    pub samples: SampleSet,
    /// Bicubic `p/s × p/s` downscale of the HR patch (guidance target).
    pub lr_patch: Image,
    pub hr_patch: Image,
}

/// Crops the patch, maps the whole viewport grid back to the ERP, keeps the
/// points inside the patch, subsamples to at most `n`, normalizes them and
/// samples the HR patch bicubically at each point.
pub fn dis_samp<R: Rng + ?Sized>(
    img: &Image,
    ps: &PatchSpec,
    spec: &ViewportSpec,
    n: usize,
    rng: &mut R,
) -> Result<DpsDraw> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let (h, w) = (img.height(), img.width());
    let hr_patch = crop_patch(img, ps.a, ps.b, ps.p)?;
    let grid = viewport_grid(spec, h, w);
    let erp: Vec<ErpCoord> = grid.iter().map(|g| g.1).collect();
    let kept = filter_indices(&erp, ps, w);
    if kept.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let chosen: Vec<usize> = random_subsample(kept.len(), n, rng)
        .into_iter()
        .map(|i| kept[i])
        .collect();
    let filtered: Vec<ErpCoord> = chosen
        .iter()
        .map(|&i| ErpCoord::new(ps.unwrap_column(erp[i].x1, w), erp[i].x2))
        .collect();
    let coords = coord_space_transform(&filtered, ps)?;
    let pixels = coords
        .iter()
        .map(|&c| sample_at(&hr_patch, denormalize(c, ps.p), Kernel::Bicubic, false))
        .collect();
    let view_coords = chosen.iter().map(|&i| grid[i].0).collect();
    let lr_patch = bicubic_downscale(&hr_patch, ps.s)?;
    Ok(DpsDraw {
        samples: SampleSet {
            coords,
            pixels,
            view_coords,
        },
        lr_patch,
        hr_patch,
    })
}

/// Choice sets for drawing a training viewport around a patch.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSampler {
    /// Field-of-view choices in radians.
    pub fov_choices: Vec<f64>,
    pub res_choices: Vec<usize>,
    /// Draw `F_h` and `F_v` (and `h_v`, `w_v`) independently; when unset a
    /// single draw is used for both axes.
    pub independent: bool,
}

impl ViewSampler {
    pub fn full_scale() -> Self {
        Self {
            fov_choices: FOV_CHOICES_DEG.iter().map(|d| d.to_radians()).collect(),
            res_choices: RESOLUTION_CHOICES.to_vec(),
            independent: true,
        }
    }
}

/// Viewport centered on the patch center with randomly drawn fields of view
/// and resolution.
pub fn pick_view_for_patch<R: Rng + ?Sized>(
    ps: &PatchSpec,
    height: usize,
    width: usize,
    sampler: &ViewSampler,
    rng: &mut R,
) -> Result<ViewportSpec> {
    if sampler.fov_choices.is_empty() || sampler.res_choices.is_empty() {
        return Err(Error::InvalidArgument("empty choice set".into()));
    }
    let center = erp_to_sphere(ps.center(width), height, width);
    let pick_f = |rng: &mut R| sampler.fov_choices[rng.random_range(0..sampler.fov_choices.len())];
    let pick_r = |rng: &mut R| sampler.res_choices[rng.random_range(0..sampler.res_choices.len())];
    let fov_h = pick_f(rng);
    let fov_v = if sampler.independent { pick_f(rng) } else { fov_h };
    let h_v = pick_r(rng);
    let w_v = if sampler.independent { pick_r(rng) } else { h_v };
    ViewportSpec::new(center.theta, center.phi, fov_h, fov_v, h_v, w_v)
}

/// SplitMix64 finalizer, used to derive independent per-item seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
