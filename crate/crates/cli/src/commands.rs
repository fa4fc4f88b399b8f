use std::fs;
use std::path::Path;

use anyhow::Context;
use lilo_core::eval::{change_body_frame, loop_closure_error, runtime_profile, segment_errors, text_report, KITTI_LENGTHS, SHORT_LENGTHS};
use lilo_core::io::{apply_config, read_kitti_calib, read_kitti_poses, read_velodyne_bin, write_kitti_poses, write_pgm, write_ply, FrameSource};
use lilo_core::pipeline::{extract_features, Pipeline, PipelineConfig, StageTimings};
use lilo_core::{Error, PointCloud};

use crate::{DumpArgs, EvalArgs, RunArgs, Settings};

/// An error with the process exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

const FATAL: u8 = 1;
const EVAL_PARSE: u8 = 2;

fn fatal(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: FATAL,
        error: error.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn configure(s: &Settings) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig::for_profile(s.profile);
    if let Some(path) = &s.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display())).map_err(fatal)?;
        cfg = apply_config(cfg, &text).with_context(|| format!("config {}", path.display())).map_err(fatal)?;
    }
    if let Some(width) = s.resolution {
        cfg.sri.width = width;
    }
    if let Some(group) = s.features {
        cfg.odom.feature_group = group;
    }
    if let Some(route) = s.filter {
        cfg.filter = route;
    }
    cfg.validate().map_err(fatal)?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(fatal)
}

fn timings_csv(frames: &[StageTimings]) -> String {
    let mut s = format!("frame,{},total\n", StageTimings::STAGES.join(","));
    for (k, t) in frames.iter().enumerate() {
        let ms: Vec<String> = t.as_array().iter().chain([t.total()].iter()).map(|d| format!("{:.4}", d.as_secs_f64() * 1e3)).collect();
        s.push_str(&format!("{k},{}\n", ms.join(",")));
    }
    s
}

pub fn run(a: &RunArgs) -> CmdResult {
    let cfg = configure(&a.settings)?;
    let source = FrameSource::open(&a.input).map_err(fatal)?;
    let extrinsic = a.calib.as_deref().map(read_kitti_calib).transpose().map_err(fatal)?;
    create_dir(&a.output)?;
    let sri_dir = a.output.join("sri");
    let features_dir = a.output.join("features");
    if a.dump_sri {
        create_dir(&sri_dir)?;
    }
    if a.dump_features {
        create_dir(&features_dir)?;
    }
    if source.is_empty() {
        log::warn!("no .bin frames in {}", a.input.display());
    }

    let mut pipeline = Pipeline::new(cfg.clone()).map_err(fatal)?;
    let mut poses = Vec::with_capacity(source.len());
    let mut timings = Vec::with_capacity(source.len());
    let mut skipped = 0;
    for k in 0..source.len() {
        let dt = match (k.checked_sub(1).and_then(|p| source.timestamp(p)), source.timestamp(k)) {
            (Some(prev), Some(now)) if now > prev => Some(now - prev),
            _ => None,
        };
        let report = match source.read(k) {
            Ok(frame) => {
                if frame.dropped > 0 {
                    log::warn!("frame {k}: dropped {} non-finite records", frame.dropped);
                }
                if a.dump_sri || a.dump_features {
                    dump_frame(&frame.cloud, &cfg, k, a)?;
                }
                pipeline.process(&frame.cloud, dt)
            }
            Err(e) => {
                log::warn!("frame {k}: {e}");
                skipped += 1;
                pipeline.skip(dt)
            }
        };
        poses.push(report.pose);
        timings.push(report.timings);
    }

    let written = match &extrinsic {
        Some(tr) => change_body_frame(&poses, tr),
        None => poses,
    };
    let poses_path = a.output.join("poses.txt");
    write_kitti_poses(&written, &poses_path).map_err(fatal)?;
    let write = |name: &str, text: String| {
        let p = a.output.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display())).map_err(fatal)
    };
    write("timings.csv", timings_csv(&timings))?;
    if !timings.is_empty() {
        let profile = runtime_profile(&timings);
        write("runtime.csv", profile.to_csv())?;
        println!("frames: {} ({} unreadable)", written.len(), skipped);
        println!("mean stage time: {:.1} ms/frame (median {:.1}, p95 {:.1})", profile.total.mean, profile.total.median, profile.total.p95);
    } else {
        println!("frames: 0");
    }
    println!("trajectory: {}", poses_path.display());
    Ok(())
}

fn dump_frame(cloud: &PointCloud, cfg: &PipelineConfig, k: usize, a: &RunArgs) -> CmdResult {
    let mut scratch = StageTimings::default();
    let ex = match extract_features(cloud, cfg, &mut scratch) {
        Ok(ex) => ex,
        Err(e) => {
            log::warn!("frame {k}: no dump, {e}");
            return Ok(());
        }
    };
    if a.dump_sri {
        write_pgm(a.output.join("sri").join(format!("{k:06}.pgm")), &ex.image.range, &ex.image.valid).map_err(fatal)?;
    }
    if a.dump_features {
        let c = &ex.clouds;
        write_ply(a.output.join("features").join(format!("{k:06}.ply")), &[(&c.edge, EDGE_RGB), (&c.surface, SURFACE_RGB), (&c.ground, GROUND_RGB)])
            .map_err(fatal)?;
    }
    Ok(())
}

const EDGE_RGB: [u8; 3] = [230, 60, 40];
const SURFACE_RGB: [u8; 3] = [60, 110, 230];
const GROUND_RGB: [u8; 3] = [70, 190, 80];

fn read_for_eval(path: &Path) -> Result<Vec<lilo_core::PoseSE3>, Failure> {
    read_kitti_poses(path).map_err(|e| Failure {
        code: if matches!(e, Error::MalformedPoseLine { .. }) { EVAL_PARSE } else { FATAL },
        error: e.into(),
    })
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    let estimate = read_for_eval(&a.estimate)?;
    let truth = read_for_eval(&a.truth)?;
    let lengths: &[f64] = if a.short_ladder { &SHORT_LENGTHS } else { &KITTI_LENGTHS };
    let segments = match segment_errors(&estimate, &truth, lengths) {
        Ok(r) => Some(r),
        Err(e @ Error::TrajectoryTooShort { .. }) => {
            log::warn!("{e}; only loop closure is reported");
            None
        }
        Err(e) => {
            return Err(Failure {
                code: EVAL_PARSE,
                error: e.into(),
            })
        }
    };
    let closure = loop_closure_error(&estimate);
    let mut text = text_report(segments.as_ref(), closure.as_ref());
    if a.short_ladder {
        text.insert_str(0, "segment ladder: 10/20/50 m (not comparable with KITTI results)\n");
    }
    print!("{text}");

    let dir = match &a.output {
        Some(d) => d.clone(),
        None => a.estimate.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if !dir.as_os_str().is_empty() {
        create_dir(&dir)?;
    }
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        fs::write(&p, body).with_context(|| format!("writing {}", p.display())).map_err(fatal)
    };
    write("eval_report.txt", &text)?;
    if let Some(r) = &segments {
        write("eval_segments.csv", &r.to_csv())?;
    }
    Ok(())
}

fn extract_one(a: &DumpArgs) -> Result<lilo_core::pipeline::ExtractedFeatures, Failure> {
    let cfg = configure(&a.settings)?;
    let frame = read_velodyne_bin(&a.input).map_err(fatal)?;
    let mut scratch = StageTimings::default();
    extract_features(&frame.cloud, &cfg, &mut scratch)
        .with_context(|| format!("extracting features of {}", a.input.display()))
        .map_err(fatal)
}

pub fn dump_sri(a: &DumpArgs) -> CmdResult {
    let ex = extract_one(a)?;
    write_pgm(&a.output, &ex.image.range, &ex.image.valid).map_err(fatal)?;
    println!("{}x{} image, {} valid pixels", ex.image.rows(), ex.image.cols(), ex.image.valid_count());
    Ok(())
}

pub fn dump_features(a: &DumpArgs) -> CmdResult {
    let ex = extract_one(a)?;
    let c = &ex.clouds;
    write_ply(&a.output, &[(&c.edge, EDGE_RGB), (&c.surface, SURFACE_RGB), (&c.ground, GROUND_RGB)]).map_err(fatal)?;
    println!("edge {} surface {} ground {}", c.edge.len(), c.surface.len(), c.ground.len());
    Ok(())
}

