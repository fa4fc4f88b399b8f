//! Lifting feature images back to 3D, plus voxel-grid downsampling.

use std::f64::consts::{PI, TAU};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::filter::FeatureImages;
use crate::geom::Vec3;
use crate::grid::{Grid, MaskedGrid};
use crate::sri::SphericalRangeImage;

/// Edge, surface and ground points of one scan.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureClouds {
    pub edge: PointCloud,
    pub surface: PointCloud,
    pub ground: PointCloud,
}

impl FeatureClouds {
    pub fn total(&self) -> usize {
        self.edge.len() + self.surface.len() + self.ground.len()
    }

    pub fn transformed(&self, pose: &crate::geom::PoseSE3) -> FeatureClouds {
        FeatureClouds {
            edge: self.edge.transformed(pose),
            surface: self.surface.transformed(pose),
            ground: self.ground.transformed(pose),
        }
    }

    pub fn map_clouds(&self, mut f: impl FnMut(&PointCloud) -> PointCloud) -> FeatureClouds {
        FeatureClouds {
            edge: f(&self.edge),
            surface: f(&self.surface),
            ground: f(&self.ground),
        }
    }
}

/// Azimuth assigned to column `j` of an `n`-wide image: `π − 2πj/n`.
#[inline]
pub fn azimuth_of_column(j: usize, n: usize) -> f64 {
    PI - TAU * j as f64 / n as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReconstructionStats {
    pub emitted: usize,
    /// Pixels whose height exceeded their range; emitted on the z axis.
    pub clamped: usize,
}

/// Azimuth of the center of column `j`, half a column below
/// [`azimuth_of_column`]. Projection bins azimuths `(ω_{j+1}, ω_j]` into
/// column `j`, so the center is their mean; lifting at the column edge would
/// rotate every cloud by `π/n`.
#[inline]
pub fn pixel_azimuth(j: usize, n: usize) -> f64 {
    azimuth_of_column(j, n) - PI / n as f64
}

/// Rebuilds one point per valid pixel.
///
/// With range `r` and height `z` from `z_map`, the horizontal radius is
/// `ρ = √max(r² − z², 0)` and the point is `(ρ cos ω, ρ sin ω, z)` where `ω`
/// is [`pixel_azimuth`].
pub fn reconstruct(feature: &MaskedGrid, z_map: &Grid<f64>) -> (PointCloud, ReconstructionStats) {
    let (m, n) = (feature.rows(), feature.cols());
    let mut stats = ReconstructionStats::default();
    let mut points = Vec::new();
    let trig: Vec<(f64, f64)> = (0..n).map(|j| pixel_azimuth(j, n).sin_cos()).collect();
    for i in 0..m {
        for (j, (s, c)) in trig.iter().enumerate() {
            let Some(r) = feature.value(i, j) else { continue };
            let z = *z_map.get(i, j);
            let rho_sq = r * r - z * z;
            let (rho, z) = if rho_sq >= 0.0 {
                (rho_sq.sqrt(), z)
            } else {
                stats.clamped += 1;
                (0.0, r.copysign(z))
            };
            points.push(Vec3::new(rho * c, rho * s, z));
        }
    }
    stats.emitted = points.len();
    (PointCloud::from_points(points), stats)
}

/// Reconstructs all three feature classes against the source image's height map.
pub fn reconstruct_features(features: &FeatureImages, img: &SphericalRangeImage) -> (FeatureClouds, ReconstructionStats) {
    let (edge, a) = reconstruct(&features.edge, &img.z_map);
    let (surface, b) = reconstruct(&features.surface, &img.z_map);
    let (ground, c) = reconstruct(&features.ground, &img.z_map);
    let stats = ReconstructionStats {
        emitted: a.emitted + b.emitted + c.emitted,
        clamped: a.clamped + b.clamped + c.clamped,
    };
    (FeatureClouds { edge, surface, ground }, stats)
}

/// Cubic voxel grid aligned with the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelConfig {
    /// Voxel edge length, meters.
    pub leaf_edge: f64,
    pub enabled: bool,
}

impl VoxelConfig {
    pub fn new(leaf_edge: f64) -> Self {
        Self {
            leaf_edge,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.leaf_edge > 0.0 && self.leaf_edge.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "voxel leaf must be positive, got {}",
                self.leaf_edge
            )))
        }
    }
}

pub type VoxelKey = (i64, i64, i64);

#[inline]
pub fn voxel_key(p: &Vec3, leaf: f64) -> VoxelKey {
    (
        (p.x / leaf).floor() as i64,
        (p.y / leaf).floor() as i64,
        (p.z / leaf).floor() as i64,
    )
}

/// Replaces the points of each occupied voxel by their centroid. Output is
/// ordered by voxel index. Disabled configs return the input unchanged.
pub fn voxel_downsample(cloud: &PointCloud, cfg: &VoxelConfig) -> PointCloud {
    if !cfg.enabled || cloud.is_empty() {
        return PointCloud::from_points(cloud.points.clone());
    }
    let mut keyed: Vec<(VoxelKey, usize)> = cloud
        .iter()
        .enumerate()
        .map(|(k, p)| (voxel_key(p, cfg.leaf_edge), k))
        .collect();
    keyed.sort_unstable();
    let mut out = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let key = keyed[start].0;
        let mut end = start;
        let mut sum = Vec3::zeros();
        while end < keyed.len() && keyed[end].0 == key {
            sum += cloud.points[keyed[end].1];
            end += 1;
        }
        out.push(sum / (end - start) as f64);
        start = end;
    }
    PointCloud::from_points(out)
}
