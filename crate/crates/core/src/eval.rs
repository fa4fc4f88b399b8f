//! Trajectory scoring: segment-wise drift over the KITTI length ladder, loop
//! closure and per-stage runtime statistics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::{rotation_angle, PoseSE3};
use crate::pipeline::StageTimings;

/// Segment lengths of the KITTI odometry benchmark, meters.
pub const KITTI_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];
/// Reduced ladder for short synthetic paths. Not comparable with KITTI figures.
pub const SHORT_LENGTHS: [f64; 3] = [10.0, 20.0, 50.0];
/// Frames between consecutive segment starts.
pub const SEGMENT_STRIDE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BucketError {
    pub length: f64,
    pub segments: usize,
    /// Mean translation error, percent of segment length.
    pub translation_pct: f64,
    /// Mean rotation error, degrees per meter.
    pub rotation_deg_per_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentErrorReport {
    /// One entry per length that produced at least one segment.
    pub buckets: Vec<BucketError>,
    pub segments: usize,
    /// Mean translation error over all segments, percent.
    pub ate_percent: f64,
    /// Mean rotation error over all segments, degrees per meter.
    pub are_deg_per_m: f64,
}

impl SegmentErrorReport {
    pub fn are_deg_per_100m(&self) -> f64 {
        100.0 * self.are_deg_per_m
    }

    /// One row per length bucket.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("length_m,segments,translation_pct,rotation_deg_per_m\n");
        for b in &self.buckets {
            let _ = writeln!(s, "{},{},{:.6},{:.8}", b.length, b.segments, b.translation_pct, b.rotation_deg_per_m);
        }
        s
    }
}

/// Re-expresses poses of one rigidly attached body frame in another:
/// `extrinsic` maps points of the current body frame into the new one.
pub fn change_body_frame(traj: &[PoseSE3], extrinsic: &PoseSE3) -> Vec<PoseSE3> {
    let inv = extrinsic.inverse();
    traj.iter().map(|p| extrinsic.compose(p).compose(&inv)).collect()
}

/// Cumulative ground-truth path length at each pose.
pub fn arc_lengths(traj: &[PoseSE3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    for (k, p) in traj.iter().enumerate() {
        if k > 0 {
            acc += (p.translation - traj[k - 1].translation).norm();
        }
        out.push(acc);
    }
    out
}

/// Relative-pose drift of `estimate` against `truth` over every segment that
/// starts on a stride boundary and spans one of `lengths` meters of
/// ground-truth path. A segment ends at the first pose at least that far along.
pub fn segment_errors(estimate: &[PoseSE3], truth: &[PoseSE3], lengths: &[f64]) -> Result<SegmentErrorReport> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            estimate: estimate.len(),
            truth: truth.len(),
        });
    }
    let shortest = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    let dist = arc_lengths(truth);
    let total = dist.last().copied().unwrap_or(0.0);

    let mut sums = vec![(0usize, 0.0, 0.0); lengths.len()];
    for first in (0..truth.len()).step_by(SEGMENT_STRIDE) {
        for (b, &len) in lengths.iter().enumerate() {
            let Some(last) = (first..truth.len()).find(|&k| dist[k] >= dist[first] + len) else {
                continue;
            };
            let truth_rel = truth[first].inverse().compose(&truth[last]);
            let est_rel = estimate[first].inverse().compose(&estimate[last]);
            let e = truth_rel.inverse().compose(&est_rel);
            let s = &mut sums[b];
            s.0 += 1;
            s.1 += e.translation.norm() / len;
            s.2 += rotation_angle(&e.rotation) / len;
        }
    }

    let segments: usize = sums.iter().map(|s| s.0).sum();
    if segments == 0 {
        return Err(Error::TrajectoryTooShort {
            length: total,
            required: shortest,
        });
    }
    let buckets = lengths
        .iter()
        .zip(&sums)
        .filter(|(_, s)| s.0 > 0)
        .map(|(&length, &(n, t, r))| BucketError {
            length,
            segments: n,
            translation_pct: 100.0 * t / n as f64,
            rotation_deg_per_m: (r / n as f64).to_degrees(),
        })
        .collect();
    let t: f64 = sums.iter().map(|s| s.1).sum();
    let r: f64 = sums.iter().map(|s| s.2).sum();
    Ok(SegmentErrorReport {
        buckets,
        segments,
        ate_percent: 100.0 * t / segments as f64,
        are_deg_per_m: (r / segments as f64).to_degrees(),
    })
}

/// Offset between the last and first positions of a closed path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopClosureReport {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub d: f64,
}

impl LoopClosureReport {
    pub fn from_components(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            d: (x * x + y * y + z * z).sqrt(),
        }
    }
}

/// `None` for fewer than two poses.
pub fn loop_closure_error(traj: &[PoseSE3]) -> Option<LoopClosureReport> {
    if traj.len() < 2 {
        return None;
    }
    let delta = traj[traj.len() - 1].translation - traj[0].translation;
    Some(LoopClosureReport::from_components(delta.x, delta.y, delta.z))
}

/// Mean, median and 95th percentile of one stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageSummary {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl StageSummary {
    fn of(mut ms: Vec<f64>) -> Self {
        if ms.is_empty() {
            return Self::default();
        }
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let median = if n % 2 == 1 { ms[n / 2] } else { 0.5 * (ms[n / 2 - 1] + ms[n / 2]) };
        // Nearest rank.
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            mean: ms.iter().sum::<f64>() / n as f64,
            median,
            p95: ms[rank - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeProfile {
    pub frames: usize,
    /// In the order of [`StageTimings::STAGES`].
    pub stages: [StageSummary; 6],
    pub total: StageSummary,
}

impl RuntimeProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,mean_ms,median_ms,p95_ms\n");
        let rows = StageTimings::STAGES.iter().zip(&self.stages).chain(std::iter::once((&"total", &self.total)));
        for (name, st) in rows {
            let _ = writeln!(s, "{name},{:.4},{:.4},{:.4}", st.mean, st.median, st.p95);
        }
        s
    }
}

pub fn runtime_profile(frames: &[StageTimings]) -> RuntimeProfile {
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    let stages = std::array::from_fn(|k| StageSummary::of(frames.iter().map(|t| ms(t.as_array()[k])).collect()));
    RuntimeProfile {
        frames: frames.len(),
        stages,
        total: StageSummary::of(frames.iter().map(|t| ms(t.total())).collect()),
    }
}

/// Human-readable summary of whichever metrics are available.
pub fn text_report(segments: Option<&SegmentErrorReport>, closure: Option<&LoopClosureReport>) -> String {
    let mut s = String::new();
    if let Some(r) = segments {
        let _ = writeln!(s, "segments: {}", r.segments);
        let _ = writeln!(s, "ATE: {:.3} %", r.ate_percent);
        let _ = writeln!(s, "ARE: {:.4} deg/m ({:.2} deg/100m)", r.are_deg_per_m, r.are_deg_per_100m());
        for b in &r.buckets {
            let _ = writeln!(s, "  {:>5} m  n={:<5} {:.3} %  {:.4} deg/m", b.length, b.segments, b.translation_pct, b.rotation_deg_per_m);
        }
    }
    if let Some(c) = closure {
        let _ = writeln!(s, "loop closure: x={:.3} y={:.3} z={:.3} d={:.3} m", c.x, c.y, c.z, c.d);
    }
    s
}
