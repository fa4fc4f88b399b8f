//! Line/plane fits over map neighborhoods and the matching residuals.

use nalgebra::{Matrix3, RowVector6, SymmetricEigen};

use crate::geom::{hat, PoseSE3, Vec3};

/// Thresholds that decide whether a neighborhood supports a line or plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub min_neighbors: usize,
    /// A line needs `λ_max ≥ line_ratio · λ_mid`.
    pub line_ratio: f64,
    /// A plane needs `λ_min ≤ plane_flatness · λ_mid`.
    pub plane_flatness: f64,
    /// Largest mean absolute point-to-plane distance, meters.
    pub plane_max_mean_dist: f64,
    /// Every neighbor must lie within this distance of a fitted plane, meters.
    pub plane_max_point_dist: f64,
    /// Every neighbor must lie within this distance of a fitted line, meters.
    pub line_max_point_dist: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            min_neighbors: 5,
            line_ratio: 3.0,
            plane_flatness: 0.33,
            plane_max_mean_dist: 0.2,
            plane_max_point_dist: 0.1,
            line_max_point_dist: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub point: Vec3,
    /// Unit direction.
    pub direction: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub point: Vec3,
    /// Unit normal.
    pub normal: Vec3,
}

/// Centroid plus covariance eigenpairs sorted ascending.
struct Spread {
    centroid: Vec3,
    values: [f64; 3],
    vectors: [Vec3; 3],
}

fn spread(points: &[Vec3]) -> Spread {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Spread {
        centroid,
        values: order.map(|k| eig.eigenvalues[k].max(0.0)),
        vectors: order.map(|k| eig.eigenvectors.column(k).normalize()),
    }
}

/// Line through the centroid along the dominant covariance axis. `None` when
/// there are too few points, the neighborhood is not elongated, or some
/// neighbor is off the line.
pub fn fit_line(points: &[Vec3], cfg: &FitConfig) -> Option<Line> {
    if points.len() < cfg.min_neighbors.max(2) {
        return None;
    }
    let s = spread(points);
    let [_, mid, max] = s.values;
    if max <= f64::EPSILON || max < cfg.line_ratio * mid {
        return None;
    }
    let direction = s.vectors[2];
    if points.iter().any(|p| (p - s.centroid).cross(&direction).norm() > cfg.line_max_point_dist) {
        return None;
    }
    Some(Line {
        point: s.centroid,
        direction,
    })
}

/// Plane through the centroid normal to the weakest covariance axis. `None`
/// when there are too few points, the spread is not flat, the points are
/// (numerically) collinear, or the fit is loose. The per-point bound rejects
/// neighborhoods straddling two surfaces, such as voxel centroids where a
/// wall meets the ground, which the mean bound lets through.
pub fn fit_plane(points: &[Vec3], cfg: &FitConfig) -> Option<Plane> {
    if points.len() < cfg.min_neighbors.max(3) {
        return None;
    }
    let s = spread(points);
    let [min, mid, max] = s.values;
    // Collinear sets have λ_mid ≈ λ_min ≈ 0, where their ratio is just rounding noise.
    if mid <= 1e-6 * max || min > cfg.plane_flatness * mid {
        return None;
    }
    let normal = s.vectors[0];
    let dist = |p: &Vec3| (p - s.centroid).dot(&normal).abs();
    let mean_dist = points.iter().map(dist).sum::<f64>() / points.len() as f64;
    if mean_dist > cfg.plane_max_mean_dist || points.iter().any(|p| dist(p) > cfg.plane_max_point_dist) {
        return None;
    }
    Some(Plane {
        point: s.centroid,
        normal,
    })
}

/// Scalar residual and its gradient with respect to a right perturbation
/// `T·exp(δ)`, `δ = (ω, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub jacobian: RowVector6<f64>,
}

/// d(T·exp(δ)·p)/dδ at δ = 0.
fn point_jacobian(pose: &PoseSE3, p: &Vec3) -> nalgebra::Matrix3x6<f64> {
    let mut j = nalgebra::Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(pose.rotation * -hat(p)));
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&pose.rotation);
    j
}

/// Distance from `T·p` to the line.
pub fn edge_residual(pose: &PoseSE3, p: &Vec3, line: &Line) -> Residual {
    let d = pose.apply(p) - line.point;
    let c = d.cross(&line.direction);
    let value = c.norm();
    let unit = c / value.max(1e-9);
    // d(d × n) = -[n]× dd
    let jacobian = unit.transpose() * (-hat(&line.direction)) * point_jacobian(pose, p);
    Residual { value, jacobian }
}

/// Signed distance from `T·p` to the plane.
pub fn surface_residual(pose: &PoseSE3, p: &Vec3, plane: &Plane) -> Residual {
    let value = (pose.apply(p) - plane.point).dot(&plane.normal);
    let jacobian = plane.normal.transpose() * point_jacobian(pose, p);
    Residual { value, jacobian }
}
