//! End-to-end frame processing: raw cloud to pose.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::cloud::PointCloud;
use crate::error::Result;
use crate::filter::{segment_frequency, segment_sobel, FeatureImages, SobelConfig};
use crate::geom::PoseSE3;
use crate::odom::{FeatureGroupMode, FrameStatus, OdomConfig, Odometry};
use crate::recon::{reconstruct_features, FeatureClouds, ReconstructionStats};
use crate::sri::{interpolate_rows, project, ProjectionStats, SphericalRangeImage, SriParams};

/// Image-plane segmentation route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterRoute {
    #[default]
    Sobel,
    /// Column-masked FFT ground filter, for sparse sensors.
    Frequency,
}

impl FromStr for FilterRoute {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sobel" => Ok(Self::Sobel),
            "fft" | "frequency" => Ok(Self::Frequency),
            other => Err(format!("expected sobel or fft, got {other:?}")),
        }
    }
}

impl fmt::Display for FilterRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterRoute::Sobel => "sobel",
            FilterRoute::Frequency => "fft",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SensorProfile {
    /// 64-beam sensor: Sobel route, 64 rows, all feature groups.
    #[default]
    Hdl64,
    /// 16-beam sensor: FFT route, rows doubled to 32, edges and surfaces.
    Vlp16,
}

impl FromStr for SensorProfile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hdl64" => Ok(Self::Hdl64),
            "vlp16" => Ok(Self::Vlp16),
            other => Err(format!("expected hdl64 or vlp16, got {other:?}")),
        }
    }
}

impl fmt::Display for SensorProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensorProfile::Hdl64 => "hdl64",
            SensorProfile::Vlp16 => "vlp16",
        })
    }
}

/// Everything needed to turn frames into poses.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sri: SriParams,
    pub filter: FilterRoute,
    pub sobel: SobelConfig,
    pub odom: OdomConfig,
    /// Frame period used when frames carry no timestamps, seconds.
    pub frame_dt: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_profile(SensorProfile::Hdl64)
    }
}

impl PipelineConfig {
    pub fn for_profile(profile: SensorProfile) -> Self {
        let (sri, filter, group) = match profile {
            SensorProfile::Hdl64 => (SriParams::hdl64(720), FilterRoute::Sobel, FeatureGroupMode::EGS),
            SensorProfile::Vlp16 => (SriParams::vlp16(720), FilterRoute::Frequency, FeatureGroupMode::ES),
        };
        Self {
            sri,
            filter,
            sobel: SobelConfig::default(),
            odom: OdomConfig {
                feature_group: group,
                ..OdomConfig::default()
            },
            frame_dt: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sri.validate()?;
        self.sobel.validate()?;
        self.odom.validate()?;
        if !(self.frame_dt > 0.0 && self.frame_dt.is_finite()) {
            return Err(crate::Error::InvalidParameter(format!("frame_dt must be positive, got {}", self.frame_dt)));
        }
        Ok(())
    }
}

/// Wall-clock time spent in each stage of one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub projection: Duration,
    pub filtering: Duration,
    pub reconstruction: Duration,
    pub association: Duration,
    pub optimization: Duration,
    pub map_update: Duration,
}

impl StageTimings {
    pub const STAGES: [&'static str; 6] = ["projection", "filtering", "reconstruction", "association", "optimization", "map_update"];

    pub fn as_array(&self) -> [Duration; 6] {
        [self.projection, self.filtering, self.reconstruction, self.association, self.optimization, self.map_update]
    }

    pub fn total(&self) -> Duration {
        self.as_array().iter().sum()
    }
}

/// Intermediate products of feature extraction for one frame.
#[derive(Debug, Clone)]
pub struct ExtractedFeatures {
    /// Range image after optional row interpolation.
    pub image: SphericalRangeImage,
    pub features: FeatureImages,
    pub clouds: FeatureClouds,
    pub projection: ProjectionStats,
    pub reconstruction: ReconstructionStats,
}

/// Projection, segmentation and reconstruction of one raw cloud.
pub fn extract_features(cloud: &PointCloud, cfg: &PipelineConfig, timings: &mut StageTimings) -> Result<ExtractedFeatures> {
    let t = Instant::now();
    let (mut image, projection) = project(cloud, &cfg.sri);
    if cfg.sri.interpolation_factor > 1 {
        image = interpolate_rows(&image, cfg.sri.interpolation_factor, cfg.sri.interp_max_gap);
    }
    timings.projection = t.elapsed();

    let t = Instant::now();
    let features = match cfg.filter {
        FilterRoute::Sobel => segment_sobel(&image, &cfg.sobel)?,
        FilterRoute::Frequency => segment_frequency(&image, &cfg.sobel)?,
    };
    timings.filtering = t.elapsed();

    let t = Instant::now();
    let (clouds, reconstruction) = reconstruct_features(&features, &image);
    timings.reconstruction = t.elapsed();

    Ok(ExtractedFeatures {
        image,
        features,
        clouds,
        projection,
        reconstruction,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub pose: PoseSE3,
    pub status: FrameStatus,
    pub timings: StageTimings,
    /// Edge, surface and ground counts before voxel reduction.
    pub feature_counts: [usize; 3],
}

/// Stateful driver over a frame sequence.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    odometry: Odometry,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            odometry: Odometry::new(config.odom)?,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn odometry(&self) -> &Odometry {
        &self.odometry
    }

    /// Processes one raw cloud. `dt` defaults to the configured frame period.
    /// Frames that fail feature extraction are carried forward by prediction.
    pub fn process(&mut self, cloud: &PointCloud, dt: Option<f64>) -> FrameReport {
        let dt = dt.unwrap_or(self.config.frame_dt);
        let mut timings = StageTimings::default();
        match extract_features(cloud, &self.config, &mut timings) {
            Ok(extracted) => {
                let c = &extracted.clouds;
                let feature_counts = [c.edge.len(), c.surface.len(), c.ground.len()];
                let r = self.odometry.process(c, dt);
                timings.association = r.timings.association;
                timings.optimization = r.timings.optimization;
                timings.map_update = r.timings.map_update;
                FrameReport {
                    pose: r.pose,
                    status: r.status,
                    timings,
                    feature_counts,
                }
            }
            Err(e) => {
                log::warn!("frame {}: {e}", self.odometry.state().frame_index);
                self.skip(Some(dt))
            }
        }
    }

    /// Records a frame that could not be read.
    pub fn skip(&mut self, dt: Option<f64>) -> FrameReport {
        let r = self.odometry.skip(dt.unwrap_or(self.config.frame_dt));
        FrameReport {
            pose: r.pose,
            status: r.status,
            timings: StageTimings::default(),
            feature_counts: [0; 3],
        }
    }
}
