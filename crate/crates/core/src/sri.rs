//! Spherical range image (SRI) projection.
//!
//! Columns index azimuth, rows index elevation. Column `j` covers azimuths in
//! `(π − 2π(j+1)/N, π − 2πj/N]`, so column 0 starts at the rear of the sensor
//! and columns advance clockwise seen from above, which is also the firing order
//! of a spinning LiDAR. Row 0 is the top of the vertical field of view.

use std::f64::consts::{PI, TAU};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::Grid;

/// Image geometry and projection gates.
#[derive(Debug, Clone, PartialEq)]
pub struct SriParams {
    /// Image width N in pixels, covering the full 360° of azimuth.
    pub width: usize,
    /// Number of laser beams; the projected image has this many rows.
    pub n_beams: usize,
    /// Lower edge of the vertical field of view, radians.
    pub fov_min: f64,
    /// Upper edge of the vertical field of view, radians.
    pub fov_max: f64,
    /// Row multiplier applied by [`interpolate_rows`]; 1 disables it.
    pub interpolation_factor: usize,
    /// Returns closer than this are discarded, meters.
    pub min_range: f64,
    /// Largest vertical range gap bridged by interpolation, meters.
    pub interp_max_gap: f64,
}

impl SriParams {
    /// Velodyne HDL-64E as recorded in KITTI: +2° to −24.8°.
    pub fn hdl64(width: usize) -> Self {
        Self {
            width,
            n_beams: 64,
            fov_min: (-24.8f64).to_radians(),
            fov_max: 2.0f64.to_radians(),
            interpolation_factor: 1,
            min_range: 0.5,
            interp_max_gap: 1.0,
        }
    }

    /// Velodyne VLP-16, ±15°, rows doubled by interpolation.
    pub fn vlp16(width: usize) -> Self {
        Self {
            width,
            n_beams: 16,
            fov_min: (-15.0f64).to_radians(),
            fov_max: 15.0f64.to_radians(),
            interpolation_factor: 2,
            min_range: 0.5,
            interp_max_gap: 1.0,
        }
    }

    /// Columns per radian of azimuth.
    pub fn x_res(&self) -> f64 {
        self.width as f64 / TAU
    }

    /// Rows per radian of elevation.
    pub fn y_res(&self) -> f64 {
        self.n_beams as f64 / self.fov_span()
    }

    pub fn fov_span(&self) -> f64 {
        self.fov_max - self.fov_min
    }

    /// Row count after interpolation.
    pub fn output_height(&self) -> usize {
        self.n_beams * self.interpolation_factor
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("sri: {msg}")));
        if self.width == 0 || self.n_beams == 0 {
            return bad("width and n_beams must be positive");
        }
        if !(self.fov_min < self.fov_max) || self.fov_min < -PI / 2.0 || self.fov_max > PI / 2.0 {
            return bad("vertical field of view must satisfy -π/2 ≤ fov_min < fov_max ≤ π/2");
        }
        if self.interpolation_factor == 0 {
            return bad("interpolation_factor must be at least 1");
        }
        if !(self.min_range >= 0.0) || !(self.interp_max_gap > 0.0) {
            return bad("min_range must be non-negative and interp_max_gap positive");
        }
        Ok(())
    }

    /// Column for an azimuth in `(−π, π]`; floor after scaling, clamped.
    #[inline]
    pub fn column_of(&self, theta: f64) -> usize {
        let j = ((PI - theta) * self.x_res()).floor();
        (j.max(0.0) as usize).min(self.width - 1)
    }

    /// Row for an elevation inside the field of view; floor after scaling, clamped.
    #[inline]
    pub fn row_of(&self, phi: f64) -> usize {
        let i = ((self.fov_max - phi) * self.y_res()).floor();
        (i.max(0.0) as usize).min(self.n_beams - 1)
    }

    /// Azimuth at the center of column `j`.
    pub fn column_center(&self, j: usize) -> f64 {
        PI - (j as f64 + 0.5) / self.x_res()
    }

    /// Elevation at the center of row `i`.
    pub fn row_center(&self, i: usize) -> f64 {
        self.fov_max - (i as f64 + 0.5) / self.y_res()
    }
}

/// `(range, azimuth, elevation)` of a point.
///
/// Azimuth is the full-quadrant arctangent of `(y, x)` in `(−π, π]`;
/// elevation is `asin(z / r)`.
pub fn spherical_coords(p: &Vec3) -> Result<(f64, f64, f64)> {
    let r = p.norm();
    if !(r > 0.0) {
        return Err(Error::DegeneratePoint);
    }
    let mut theta = p.y.atan2(p.x);
    if theta <= -PI {
        theta = PI;
    }
    let phi = (p.z / r).clamp(-1.0, 1.0).asin();
    Ok((r, theta, phi))
}

/// Range grid plus the height of the point that produced each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalRangeImage {
    /// Meters; 0 where invalid.
    pub range: Grid<f64>,
    /// z coordinate of the winning point, meters; 0 where invalid.
    pub z_map: Grid<f64>,
    pub valid: Grid<bool>,
}

impl SphericalRangeImage {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            range: Grid::filled(rows, cols, 0.0),
            z_map: Grid::filled(rows, cols, 0.0),
            valid: Grid::filled(rows, cols, false),
        }
    }

    pub fn rows(&self) -> usize {
        self.range.rows()
    }

    pub fn cols(&self) -> usize {
        self.range.cols()
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        *self.valid.get(i, j)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Smallest and largest valid range, `None` for an all-invalid image.
    pub fn range_bounds(&self) -> Option<(f64, f64)> {
        self.range
            .iter()
            .zip(self.valid.iter())
            .filter(|(_, v)| **v)
            .fold(None, |acc, (r, _)| match acc {
                None => Some((*r, *r)),
                Some((lo, hi)) => Some((lo.min(*r), hi.max(*r))),
            })
    }

    #[inline]
    fn store(&mut self, i: usize, j: usize, range: f64, z: f64) {
        self.range.set(i, j, range);
        self.z_map.set(i, j, z);
        self.valid.set(i, j, true);
    }
}

/// Counters reported by [`project`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProjectionStats {
    pub input: usize,
    pub projected: usize,
    /// Points that lost a pixel to a closer return.
    pub collisions: usize,
    pub out_of_fov: usize,
    pub below_min_range: usize,
    pub non_finite: usize,
}

/// Projects a cloud onto an `n_beams × width` image. When several points fall
/// into one cell the nearest one is kept.
pub fn project(cloud: &PointCloud, params: &SriParams) -> (SphericalRangeImage, ProjectionStats) {
    let mut img = SphericalRangeImage::empty(params.n_beams, params.width);
    let mut stats = ProjectionStats {
        input: cloud.len(),
        ..Default::default()
    };
    for p in cloud.iter() {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            stats.non_finite += 1;
            continue;
        }
        let (r, theta, phi) = match spherical_coords(p) {
            Ok(c) => c,
            Err(_) => {
                stats.below_min_range += 1;
                continue;
            }
        };
        if r < params.min_range {
            stats.below_min_range += 1;
            continue;
        }
        if phi < params.fov_min || phi > params.fov_max {
            stats.out_of_fov += 1;
            continue;
        }
        let i = params.row_of(phi);
        let j = params.column_of(theta);
        if img.is_valid(i, j) {
            stats.collisions += 1;
            if r >= *img.range.get(i, j) {
                continue;
            }
        } else {
            stats.projected += 1;
        }
        img.store(i, j, r, p.z);
    }
    (img, stats)
}

/// Inserts `factor − 1` rows between each pair of source rows, blending range
/// and height linearly. A synthesized pixel is valid only when both vertical
/// neighbors are valid and their ranges differ by less than `max_gap`.
/// Rows synthesized after the last source row are invalid.
pub fn interpolate_rows(img: &SphericalRangeImage, factor: usize, max_gap: f64) -> SphericalRangeImage {
    let factor = factor.max(1);
    if factor == 1 {
        return img.clone();
    }
    let (m, n) = (img.rows(), img.cols());
    let mut out = SphericalRangeImage::empty(m * factor, n);
    for i in 0..m {
        for j in 0..n {
            if img.is_valid(i, j) {
                out.store(i * factor, j, *img.range.get(i, j), *img.z_map.get(i, j));
            }
        }
        if i + 1 == m {
            continue;
        }
        for j in 0..n {
            if !(img.is_valid(i, j) && img.is_valid(i + 1, j)) {
                continue;
            }
            let (ra, rb) = (*img.range.get(i, j), *img.range.get(i + 1, j));
            if (ra - rb).abs() >= max_gap {
                continue;
            }
            let (za, zb) = (*img.z_map.get(i, j), *img.z_map.get(i + 1, j));
            for k in 1..factor {
                let t = k as f64 / factor as f64;
                out.store(i * factor + k, j, ra + t * (rb - ra), za + t * (zb - za));
            }
        }
    }
    out
}

/// Range image mapped linearly to `[0, 1]` together with the mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub values: Grid<f64>,
    pub valid: Grid<bool>,
    /// Range mapped to 0.
    pub offset: f64,
    /// Range difference mapped to 1; zero for constant images.
    pub span: f64,
}

impl GrayImage {
    /// Gray value back to meters.
    #[inline]
    pub fn denormalize(&self, v: f64) -> f64 {
        self.offset + v * self.span
    }

    pub fn denormalized(&self) -> Grid<f64> {
        Grid::from_fn(self.values.rows(), self.values.cols(), |i, j| {
            if *self.valid.get(i, j) {
                self.denormalize(*self.values.get(i, j))
            } else {
                0.0
            }
        })
    }
}

/// Maps valid ranges from `[min, max]` onto `[0, 1]`; invalid pixels become 0.
/// A constant image maps every valid pixel to 0.
pub fn normalize_to_gray(img: &SphericalRangeImage) -> Result<GrayImage> {
    let (lo, hi) = img.range_bounds().ok_or(Error::EmptyImage)?;
    let span = hi - lo;
    let values = Grid::from_fn(img.rows(), img.cols(), |i, j| {
        if img.is_valid(i, j) && span > 0.0 {
            (img.range.get(i, j) - lo) / span
        } else {
            0.0
        }
    });
    Ok(GrayImage {
        values,
        valid: img.valid.clone(),
        offset: lo,
        span,
    })
}
