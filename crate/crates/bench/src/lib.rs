//! Shared fixtures for the benchmarks: raycast sweeps of the synthetic city
//! loop, taken on a straight stretch.

use lilo_core::odom::{update_map, LocalFeatureMap, OdomConfig};
use lilo_core::pipeline::{extract_features, PipelineConfig, SensorProfile, StageTimings};
use lilo_core::recon::FeatureClouds;
use lilo_core::synthetic::{loop_trajectory, loop_world, relative_twist, LidarModel};
use lilo_core::{PointCloud, PoseSE3};

const START: usize = 20;

/// `count` consecutive skewed HDL-64 sweeps and their poses relative to the
/// first one.
pub fn sweeps(count: usize) -> Vec<(PointCloud, PoseSE3)> {
    let scene = loop_world(100.0, 50.0, 7);
    let traj = loop_trajectory(100.0, 50.0, 6.0, 5.0, 10.0, 1.73);
    let lidar = LidarModel::hdl64();
    let origin = traj[START].inverse();
    (START..START + count)
        .map(|k| {
            let motion = relative_twist(&traj[k - 1], &traj[k]);
            (lidar.scan(&scene, &traj[k], &motion, k as u64), origin.compose(&traj[k]))
        })
        .collect()
}

pub fn hdl64() -> PipelineConfig {
    PipelineConfig::for_profile(SensorProfile::Hdl64)
}

/// Downsampled features of one sweep.
pub fn features(cloud: &PointCloud, cfg: &PipelineConfig) -> FeatureClouds {
    let extracted = extract_features(cloud, cfg, &mut StageTimings::default()).expect("synthetic sweep has valid pixels");
    cfg.odom.downsample(&extracted.clouds)
}

/// Map holding `features` inserted at `pose`.
pub fn map_of(features: &FeatureClouds, pose: &PoseSE3, cfg: &OdomConfig) -> LocalFeatureMap {
    let mut map = LocalFeatureMap::new(cfg.edge_voxel, cfg.surface_voxel, cfg.map_trim_radius);
    update_map(&mut map, features, pose, cfg.feature_group);
    map
}
