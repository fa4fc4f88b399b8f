//! Frame-to-map odometry.
//!
//! Each frame is predicted with a constant-velocity model, registered against
//! the local edge/surface map by Gauss-Newton, deskewed with the estimated
//! inter-frame motion and finally merged into the map.

mod kdtree;
mod map;
mod residual;
mod solver;

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

pub use kdtree::KdTree;
pub use map::{LocalFeatureMap, MapLayer};
pub use residual::{edge_residual, fit_line, fit_plane, surface_residual, FitConfig, Line, Plane, Residual};
pub use solver::{register, IterationTrace, Registration, SolverConfig};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{PoseSE3, Twist, Vec3};
use crate::recon::{voxel_downsample, FeatureClouds, VoxelConfig};

/// Which clouds feed the point-to-plane term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureGroupMode {
    /// Edges and ground.
    EG,
    /// Edges and non-ground surfaces.
    ES,
    /// Edges, ground and surfaces.
    #[default]
    EGS,
}

impl FeatureGroupMode {
    pub fn surface_clouds<'a>(&self, f: &'a FeatureClouds) -> Vec<&'a PointCloud> {
        match self {
            FeatureGroupMode::EG => vec![&f.ground],
            FeatureGroupMode::ES => vec![&f.surface],
            FeatureGroupMode::EGS => vec![&f.surface, &f.ground],
        }
    }
}

impl FromStr for FeatureGroupMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EG" => Ok(Self::EG),
            "ES" => Ok(Self::ES),
            "EGS" => Ok(Self::EGS),
            other => Err(format!("expected EG, ES or EGS, got {other:?}")),
        }
    }
}

impl fmt::Display for FeatureGroupMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureGroupMode::EG => "EG",
            FeatureGroupMode::ES => "ES",
            FeatureGroupMode::EGS => "EGS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdomConfig {
    pub neighbor_radius: f64,
    pub min_neighbors: usize,
    pub max_neighbors: usize,
    pub max_gn_iterations: usize,
    pub convergence_eps: f64,
    /// Non-positive disables the robust loss.
    pub huber_delta: f64,
    pub min_correspondences: usize,
    pub line_ratio: f64,
    pub plane_flatness: f64,
    pub plane_max_mean_dist: f64,
    pub plane_max_point_dist: f64,
    pub line_max_point_dist: f64,
    pub map_trim_radius: f64,
    pub edge_voxel: VoxelConfig,
    pub surface_voxel: VoxelConfig,
    pub ground_voxel: VoxelConfig,
    pub feature_group: FeatureGroupMode,
    pub undistort: bool,
    /// Registrations per frame when undistorting. Each pass deskews the
    /// frame with the motion estimated by the previous one.
    pub deskew_passes: usize,
}

impl Default for OdomConfig {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            neighbor_radius: s.neighbor_radius,
            min_neighbors: s.fit.min_neighbors,
            max_neighbors: s.max_neighbors,
            max_gn_iterations: s.max_iterations,
            convergence_eps: s.convergence_eps,
            huber_delta: s.huber_delta,
            min_correspondences: s.min_correspondences,
            line_ratio: s.fit.line_ratio,
            plane_flatness: s.fit.plane_flatness,
            plane_max_mean_dist: s.fit.plane_max_mean_dist,
            plane_max_point_dist: s.fit.plane_max_point_dist,
            line_max_point_dist: s.fit.line_max_point_dist,
            map_trim_radius: 100.0,
            edge_voxel: VoxelConfig::new(0.2),
            surface_voxel: VoxelConfig::new(0.4),
            ground_voxel: VoxelConfig::new(0.4),
            feature_group: FeatureGroupMode::EGS,
            undistort: true,
            deskew_passes: 2,
        }
    }
}

impl OdomConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("neighbor_radius", self.neighbor_radius),
            ("convergence_eps", self.convergence_eps),
            ("line_ratio", self.line_ratio),
            ("plane_flatness", self.plane_flatness),
            ("plane_max_mean_dist", self.plane_max_mean_dist),
            ("plane_max_point_dist", self.plane_max_point_dist),
            ("line_max_point_dist", self.line_max_point_dist),
            ("map_trim_radius", self.map_trim_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.huber_delta.is_finite() {
            return Err(Error::InvalidParameter("huber_delta must be finite".into()));
        }
        let counts = [
            ("min_neighbors", self.min_neighbors),
            ("max_neighbors", self.max_neighbors),
            ("max_gn_iterations", self.max_gn_iterations),
            ("deskew_passes", self.deskew_passes),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.max_neighbors < self.min_neighbors {
            return Err(Error::InvalidParameter("max_neighbors is below min_neighbors".into()));
        }
        for v in [self.edge_voxel, self.surface_voxel, self.ground_voxel] {
            v.validate()?;
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            neighbor_radius: self.neighbor_radius,
            max_neighbors: self.max_neighbors,
            fit: FitConfig {
                min_neighbors: self.min_neighbors,
                line_ratio: self.line_ratio,
                plane_flatness: self.plane_flatness,
                plane_max_mean_dist: self.plane_max_mean_dist,
                plane_max_point_dist: self.plane_max_point_dist,
                line_max_point_dist: self.line_max_point_dist,
            },
            max_iterations: self.max_gn_iterations,
            convergence_eps: self.convergence_eps,
            huber_delta: self.huber_delta,
            min_correspondences: self.min_correspondences,
        }
    }

    /// Per-class voxel reduction of a frame.
    pub fn downsample(&self, f: &FeatureClouds) -> FeatureClouds {
        FeatureClouds {
            edge: voxel_downsample(&f.edge, &self.edge_voxel),
            surface: voxel_downsample(&f.surface, &self.surface_voxel),
            ground: voxel_downsample(&f.ground, &self.ground_voxel),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdomState {
    pub pose: PoseSE3,
    pub prev_pose: PoseSE3,
    /// Body-frame twist per second.
    pub velocity: Twist,
    /// Frames consumed so far.
    pub frame_index: usize,
    pub map: LocalFeatureMap,
    /// Downsampled features of the first frame while the map holds nothing
    /// else. Its sweep is skewed by a motion that is only known once the
    /// second frame is registered.
    pub bootstrap: Option<FeatureClouds>,
}

impl OdomState {
    pub fn new(cfg: &OdomConfig) -> Self {
        Self {
            pose: PoseSE3::identity(),
            prev_pose: PoseSE3::identity(),
            velocity: Twist::zero(),
            frame_index: 0,
            map: LocalFeatureMap::new(cfg.edge_voxel, cfg.surface_voxel, cfg.map_trim_radius),
            bootstrap: None,
        }
    }
}

/// Constant-velocity prediction; identity before the first frame.
pub fn predict(state: &OdomState, dt: f64) -> PoseSE3 {
    if state.frame_index == 0 {
        return PoseSE3::identity();
    }
    state.pose.compose(&state.velocity.scale(dt).exp())
}

/// Acquisition fraction of a point for a scan that sweeps azimuth from `π`
/// down to `−π`; matches the column order of the range image.
pub fn scan_fraction(p: &Vec3) -> f64 {
    let theta = p.y.atan2(p.x);
    let theta = if theta <= -PI { PI } else { theta };
    ((PI - theta) / TAU).clamp(0.0, 1.0)
}

/// Moves each point into the scan-end frame, given the sensor motion over the
/// whole scan.
pub fn undistort(cloud: &PointCloud, fractions: &[f64], motion: &Twist) -> PointCloud {
    assert_eq!(cloud.len(), fractions.len(), "one fraction per point");
    let points = cloud
        .iter()
        .zip(fractions)
        .map(|(p, &f)| motion.scale(f - 1.0).exp().apply(p))
        .collect();
    PointCloud {
        points,
        intensity: cloud.intensity.clone(),
    }
}

/// [`undistort`] with fractions taken from each point's azimuth.
pub fn undistort_by_azimuth(cloud: &PointCloud, motion: &Twist) -> PointCloud {
    let fractions: Vec<f64> = cloud.iter().map(scan_fraction).collect();
    undistort(cloud, &fractions, motion)
}

/// Inserts sensor-frame features observed at `pose` into the map and trims
/// it around the pose.
pub fn update_map(map: &mut LocalFeatureMap, features: &FeatureClouds, pose: &PoseSE3, mode: FeatureGroupMode) {
    let world = features.transformed(pose);
    map.insert_and_trim(&world.edge, &mode.surface_clouds(&world), &pose.translation);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameStatus {
    /// First frame; the map was empty.
    Bootstrap,
    Registered { iterations: usize, converged: bool },
    /// Too few correspondences; the prediction was kept.
    Fallback { correspondences: usize },
    /// Frame could not be read or processed; the prediction was kept.
    Skipped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdomTimings {
    pub association: Duration,
    pub optimization: Duration,
    pub map_update: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub pose: PoseSE3,
    pub predicted: PoseSE3,
    pub status: FrameStatus,
    pub timings: OdomTimings,
}

/// Stateful driver: one call per frame, in acquisition order.
#[derive(Debug, Clone)]
pub struct Odometry {
    config: OdomConfig,
    state: OdomState,
}

impl Odometry {
    pub fn new(config: OdomConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: OdomState::new(&config),
            config,
        })
    }

    pub fn config(&self) -> &OdomConfig {
        &self.config
    }

    pub fn state(&self) -> &OdomState {
        &self.state
    }

    pub fn pose(&self) -> PoseSE3 {
        self.state.pose
    }

    /// Processes one frame of sensor-frame features captured `dt` seconds
    /// after the previous one.
    pub fn process(&mut self, features: &FeatureClouds, dt: f64) -> FrameResult {
        let cfg = self.config;
        let frame = cfg.downsample(features);
        let predicted = predict(&self.state, dt);
        let mut timings = OdomTimings::default();

        let origin = self.state.pose;
        let motion_to = |pose: &PoseSE3| origin.inverse().compose(pose).log().unwrap_or_else(|_| Twist::zero());
        let deskew = |clouds: &FeatureClouds, motion: &Twist| {
            if cfg.undistort && motion.norm() > 0.0 {
                clouds.map_clouds(|c| undistort_by_azimuth(c, motion))
            } else {
                clouds.clone()
            }
        };
        // Under constant velocity the first sweep moved like the second, so
        // the map made of it alone is rebuilt with each motion estimate.
        let bootstrap = self.state.bootstrap.take().filter(|_| cfg.undistort);
        let rebuild_map = |map: &mut LocalFeatureMap, motion: &Twist| {
            if let Some(first) = &bootstrap {
                *map = LocalFeatureMap::new(cfg.edge_voxel, cfg.surface_voxel, cfg.map_trim_radius);
                update_map(map, &deskew(first, motion), &origin, cfg.feature_group);
            }
        };

        let mut motion = motion_to(&predicted);
        let (pose, status) = if self.state.map.is_empty() {
            self.state.bootstrap = Some(frame.clone());
            (predicted, FrameStatus::Bootstrap)
        } else {
            // Registering a skewed sweep as rigid yields a mid-sweep pose, so
            // the frame is deskewed with the predicted motion first and again
            // with each estimate until the motion settles.
            let passes = if cfg.undistort { cfg.deskew_passes } else { 1 };
            let solver = cfg.solver();
            let mut pose = predicted;
            let mut outcome = Ok((0, false));
            for _ in 0..passes {
                let t0 = Instant::now();
                rebuild_map(&mut self.state.map, &motion);
                timings.map_update += t0.elapsed();
                let clouds = deskew(&frame, &motion);
                let surface: Vec<Vec3> = cfg
                    .feature_group
                    .surface_clouds(&clouds)
                    .into_iter()
                    .flat_map(|c| c.points.iter().copied())
                    .collect();
                match register(&self.state.map, &clouds.edge.points, &surface, &pose, &solver) {
                    Ok(reg) => {
                        timings.association += reg.association_time;
                        timings.optimization += reg.optimization_time;
                        let (iterations, _) = outcome.unwrap_or_default();
                        outcome = Ok((iterations + reg.iterations.len(), reg.converged));
                        pose = reg.pose;
                    }
                    Err(e) => {
                        outcome = Err(e);
                        break;
                    }
                }
                let estimated = motion_to(&pose);
                let change = (estimated.to_vector() - motion.to_vector()).norm();
                motion = estimated;
                if change < cfg.convergence_eps {
                    break;
                }
            }
            match outcome {
                Ok((iterations, converged)) => (pose, FrameStatus::Registered { iterations, converged }),
                Err(Error::InsufficientConstraints { found, .. }) => {
                    log::warn!("frame {}: {found} correspondences, keeping prediction", self.state.frame_index);
                    motion = motion_to(&predicted);
                    (predicted, FrameStatus::Fallback { correspondences: found })
                }
                Err(e) => {
                    log::warn!("frame {}: {e}, keeping prediction", self.state.frame_index);
                    motion = motion_to(&predicted);
                    (predicted, FrameStatus::Fallback { correspondences: 0 })
                }
            }
        };

        let t0 = Instant::now();
        rebuild_map(&mut self.state.map, &motion);
        update_map(&mut self.state.map, &deskew(&frame, &motion), &pose, cfg.feature_group);
        timings.map_update += t0.elapsed();

        self.advance(pose, motion, dt);
        FrameResult {
            pose,
            predicted,
            status,
            timings,
        }
    }

    /// Carries the pose forward by prediction without touching the map.
    pub fn skip(&mut self, dt: f64) -> FrameResult {
        let predicted = predict(&self.state, dt);
        let motion = self.state.velocity.scale(dt);
        self.advance(predicted, motion, dt);
        FrameResult {
            pose: predicted,
            predicted,
            status: FrameStatus::Skipped,
            timings: OdomTimings::default(),
        }
    }

    fn advance(&mut self, pose: PoseSE3, motion: Twist, dt: f64) {
        self.state.prev_pose = self.state.pose;
        self.state.pose = pose;
        self.state.velocity = if dt > 0.0 { motion.scale(1.0 / dt) } else { Twist::zero() };
        self.state.frame_index += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> OdomState {
        OdomState::new(&OdomConfig::default())
    }

    #[test]
    fn first_frame_predicts_identity() {
        let mut s = state();
        s.velocity = Twist::new(Vec3::zeros(), Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(predict(&s, 0.1), PoseSE3::identity());
    }

    #[test]
    fn zero_velocity_keeps_pose() {
        let mut s = state();
        s.frame_index = 3;
        s.pose = PoseSE3::new(PoseSE3::from_yaw(0.3).rotation, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(predict(&s, 0.1), s.pose);
    }

    #[test]
    fn forward_velocity_moves_along_body_x() {
        let mut s = state();
        s.frame_index = 1;
        s.pose = PoseSE3::from_yaw(std::f64::consts::FRAC_PI_2);
        s.velocity = Twist::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        let p = predict(&s, 0.1);
        assert!((p.translation - Vec3::new(0.0, 0.1, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn constant_turn_integrates_heading() {
        let mut s = state();
        s.frame_index = 1;
        s.velocity = Twist::new(Vec3::new(0.0, 0.0, 0.5), Vec3::zeros());
        for expected in [0.05, 0.10, 0.15] {
            s.pose = predict(&s, 0.1);
            let heading = s.pose.rotation[(1, 0)].atan2(s.pose.rotation[(0, 0)]);
            assert!((heading - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn undistort_examples() {
        let cloud = PointCloud::from_points(vec![Vec3::new(5.0, 1.0, 0.2), Vec3::new(-3.0, 2.0, 1.0)]);
        let same = undistort(&cloud, &[0.3, 0.9], &Twist::zero());
        assert_eq!(same.points, cloud.points);

        let forward = Twist::new(Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0));
        let out = undistort(&cloud, &[0.0, 1.0], &forward);
        assert!((out.points[0] - (cloud.points[0] - Vec3::new(0.1, 0.0, 0.0))).norm() < 1e-12);
        assert!((out.points[1] - cloud.points[1]).norm() < 1e-12);

        let yaw = Twist::new(Vec3::new(0.0, 0.0, 0.1), Vec3::zeros());
        let p = Vec3::new(4.0, 0.0, 0.0);
        let out = undistort(&PointCloud::from_points(vec![p]), &[0.5], &yaw);
        let expected = Vec3::new(4.0 * (-0.05f64).cos(), 4.0 * (-0.05f64).sin(), 0.0);
        assert!((out.points[0] - expected).norm() < 1e-12);
    }

    #[test]
    fn scan_fraction_follows_columns() {
        assert!((scan_fraction(&Vec3::new(-1.0, 1e-12, 0.0)) - 0.0).abs() < 1e-9);
        assert!((scan_fraction(&Vec3::new(1.0, 0.0, 0.0)) - 0.5).abs() < 1e-12);
        assert!((scan_fraction(&Vec3::new(0.0, -1.0, 0.0)) - 0.75).abs() < 1e-12);
        assert_eq!(scan_fraction(&Vec3::new(-1.0, -0.0, 0.0)), 0.0);
    }

    #[test]
    fn feature_group_parsing() {
        assert_eq!("EGS".parse::<FeatureGroupMode>().unwrap(), FeatureGroupMode::EGS);
        assert_eq!("es".parse::<FeatureGroupMode>().unwrap(), FeatureGroupMode::ES);
        assert!("EX".parse::<FeatureGroupMode>().is_err());
        assert_eq!(FeatureGroupMode::EG.to_string(), "EG");
    }

    #[test]
    fn feature_group_selects_clouds() {
        let f = FeatureClouds {
            edge: PointCloud::from_points(vec![Vec3::zeros()]),
            surface: PointCloud::from_points(vec![Vec3::x(); 2]),
            ground: PointCloud::from_points(vec![Vec3::y(); 3]),
        };
        let sizes = |m: FeatureGroupMode| m.surface_clouds(&f).iter().map(|c| c.len()).collect::<Vec<_>>();
        assert_eq!(sizes(FeatureGroupMode::EG), vec![3]);
        assert_eq!(sizes(FeatureGroupMode::ES), vec![2]);
        assert_eq!(sizes(FeatureGroupMode::EGS), vec![2, 3]);
    }

    #[test]
    fn config_validation() {
        assert!(OdomConfig::default().validate().is_ok());
        let bad = OdomConfig { neighbor_radius: 0.0, ..OdomConfig::default() };
        assert!(bad.validate().is_err());
        let bad = OdomConfig { max_neighbors: 3, ..OdomConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn skip_carries_velocity() {
        let mut odo = Odometry::new(OdomConfig::default()).unwrap();
        odo.state.frame_index = 1;
        odo.state.velocity = Twist::new(Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0));
        let r = odo.skip(0.1);
        assert_eq!(r.status, FrameStatus::Skipped);
        assert!((r.pose.translation.x - 0.2).abs() < 1e-12);
        assert!((odo.state().velocity.linear.x - 2.0).abs() < 1e-12);
    }
}
