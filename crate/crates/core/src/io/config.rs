use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;

/// Every key accepted in a configuration file.
pub const CONFIG_KEYS: &[&str] = &[
    "sri.width",
    "sri.n_beams",
    "sri.fov_min_deg",
    "sri.fov_max_deg",
    "sri.interpolation_factor",
    "sri.min_range",
    "sri.interp_max_gap",
    "filter.route",
    "filter.edge_threshold",
    "filter.ground_threshold",
    "filter.ground_z_max",
    "filter.fft_ground_eps",
    "voxel.enabled",
    "voxel.edge",
    "voxel.surface",
    "voxel.ground",
    "odom.neighbor_radius",
    "odom.min_neighbors",
    "odom.max_neighbors",
    "odom.max_gn_iterations",
    "odom.convergence_eps",
    "odom.huber_delta",
    "odom.min_correspondences",
    "odom.line_ratio",
    "odom.plane_flatness",
    "odom.plane_max_mean_dist",
    "odom.plane_max_point_dist",
    "odom.line_max_point_dist",
    "odom.map_trim_radius",
    "odom.feature_group",
    "odom.undistort",
    "odom.deskew_passes",
    "frame_dt",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| Error::Config {
        key: key.to_string(),
        reason: format!("cannot parse {raw:?}: {e}"),
    })
}

fn set(cfg: &mut PipelineConfig, key: &str, raw: &str) -> Result<()> {
    let o = &mut cfg.odom;
    match key {
        "sri.width" => cfg.sri.width = value(key, raw)?,
        "sri.n_beams" => cfg.sri.n_beams = value(key, raw)?,
        "sri.fov_min_deg" => cfg.sri.fov_min = value::<f64>(key, raw)?.to_radians(),
        "sri.fov_max_deg" => cfg.sri.fov_max = value::<f64>(key, raw)?.to_radians(),
        "sri.interpolation_factor" => cfg.sri.interpolation_factor = value(key, raw)?,
        "sri.min_range" => cfg.sri.min_range = value(key, raw)?,
        "sri.interp_max_gap" => cfg.sri.interp_max_gap = value(key, raw)?,
        "filter.route" => cfg.filter = value(key, raw)?,
        "filter.edge_threshold" => cfg.sobel.edge_threshold = value(key, raw)?,
        "filter.ground_threshold" => cfg.sobel.ground_threshold = value(key, raw)?,
        "filter.ground_z_max" => cfg.sobel.ground_z_max = value(key, raw)?,
        "filter.fft_ground_eps" => cfg.sobel.fft_ground_eps = value(key, raw)?,
        "voxel.enabled" => {
            let on = value(key, raw)?;
            o.edge_voxel.enabled = on;
            o.surface_voxel.enabled = on;
            o.ground_voxel.enabled = on;
        }
        "voxel.edge" => o.edge_voxel.leaf_edge = value(key, raw)?,
        "voxel.surface" => o.surface_voxel.leaf_edge = value(key, raw)?,
        "voxel.ground" => o.ground_voxel.leaf_edge = value(key, raw)?,
        "odom.neighbor_radius" => o.neighbor_radius = value(key, raw)?,
        "odom.min_neighbors" => o.min_neighbors = value(key, raw)?,
        "odom.max_neighbors" => o.max_neighbors = value(key, raw)?,
        "odom.max_gn_iterations" => o.max_gn_iterations = value(key, raw)?,
        "odom.convergence_eps" => o.convergence_eps = value(key, raw)?,
        "odom.huber_delta" => o.huber_delta = value(key, raw)?,
        "odom.min_correspondences" => o.min_correspondences = value(key, raw)?,
        "odom.line_ratio" => o.line_ratio = value(key, raw)?,
        "odom.plane_flatness" => o.plane_flatness = value(key, raw)?,
        "odom.plane_max_mean_dist" => o.plane_max_mean_dist = value(key, raw)?,
        "odom.plane_max_point_dist" => o.plane_max_point_dist = value(key, raw)?,
        "odom.line_max_point_dist" => o.line_max_point_dist = value(key, raw)?,
        "odom.map_trim_radius" => o.map_trim_radius = value(key, raw)?,
        "odom.feature_group" => o.feature_group = value(key, raw)?,
        "odom.undistort" => o.undistort = value(key, raw)?,
        "odom.deskew_passes" => o.deskew_passes = value(key, raw)?,
        "frame_dt" => cfg.frame_dt = value(key, raw)?,
        _ => {
            return Err(Error::Config {
                key: key.to_string(),
                reason: "unknown key".into(),
            })
        }
    }
    Ok(())
}

/// Applies `key = value` lines on top of `base`. `#` starts a comment; a key
/// may appear once.
pub fn apply_config(mut base: PipelineConfig, text: &str) -> Result<PipelineConfig> {
    let mut seen = HashSet::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            return Err(Error::Config {
                key: line.to_string(),
                reason: format!("line {}: expected `key = value`", k + 1),
            });
        };
        let (key, raw) = (key.trim(), raw.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::Config {
                key: key.to_string(),
                reason: format!("line {}: repeated key", k + 1),
            });
        }
        set(&mut base, key, raw)?;
    }
    Ok(base)
}

/// Parses a configuration over the default (64-beam) settings.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    apply_config(PipelineConfig::default(), text)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odom::FeatureGroupMode;
    use crate::pipeline::FilterRoute;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(parse_config("").unwrap(), PipelineConfig::default());
        assert_eq!(parse_config("# nothing\n\n   \n").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn width_only() {
        let c = parse_config("sri.width = 1024\n").unwrap();
        let mut expected = PipelineConfig::default();
        expected.sri.width = 1024;
        assert_eq!(c, expected);
    }

    #[test]
    fn feature_group_and_route() {
        let c = parse_config("odom.feature_group = EGS\nfilter.route = fft # sparse sensor").unwrap();
        assert_eq!(c.odom.feature_group, FeatureGroupMode::EGS);
        assert_eq!(c.filter, FilterRoute::Frequency);
        assert_eq!(parse_config("odom.feature_group = es").unwrap().odom.feature_group, FeatureGroupMode::ES);
    }

    #[test]
    fn degrees_and_voxels() {
        let c = parse_config("sri.fov_min_deg = -15\nvoxel.enabled = false\nvoxel.surface = 0.3").unwrap();
        assert!((c.sri.fov_min + 15f64.to_radians()).abs() < 1e-15);
        assert!(!c.odom.edge_voxel.enabled && !c.odom.ground_voxel.enabled);
        assert_eq!(c.odom.surface_voxel.leaf_edge, 0.3);
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let base = PipelineConfig::default();
        for key in CONFIG_KEYS {
            let raw = match *key {
                "filter.route" => "sobel",
                "odom.feature_group" => "EG",
                "odom.undistort" | "voxel.enabled" => "true",
                _ => "3",
            };
            apply_config(base.clone(), &format!("{key} = {raw}")).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn errors_name_the_key() {
        let err = |t: &str| match parse_config(t) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(err("sri.widht = 720"), "sri.widht");
        assert_eq!(err("sri.width = wide"), "sri.width");
        assert_eq!(err("odom.undistort = maybe"), "odom.undistort");
        assert_eq!(err("odom.feature_group = EGX"), "odom.feature_group");
        assert_eq!(err("sri.width = 720\nsri.width = 360"), "sri.width");
        assert_eq!(err("just words"), "just words");
    }
}
