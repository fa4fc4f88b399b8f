//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed even
//! when other criteria fail. Exits non-zero when any hard criterion fails.
//! The KITTI criteria run only when `LILO_KITTI_SEQ04` names a sequence
//! directory holding `velodyne/`, `calib.txt` and the ground-truth poses
//! (`poses.txt`, or a path in `LILO_KITTI_SEQ04_POSES`).

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use lilo_core::eval::{change_body_frame, loop_closure_error, runtime_profile, segment_errors, LoopClosureReport, KITTI_LENGTHS};
use lilo_core::filter::{convolve3x3, fft_ground_filter, Kernel, EDGE_KERNEL, GROUND_KERNEL};
use lilo_core::grid::MaskedGrid;
use lilo_core::io::{read_kitti_calib, read_kitti_poses, FrameSource};
use lilo_core::odom::{edge_residual, register, surface_residual, KdTree, Line, LocalFeatureMap, OdomConfig, Odometry, Plane, SolverConfig};
use lilo_core::pipeline::{Pipeline, PipelineConfig, SensorProfile};
use lilo_core::recon::{reconstruct, FeatureClouds, VoxelConfig};
use lilo_core::sri::project;
use lilo_core::synthetic::{jitter, loop_trajectory, loop_world, relative_twist, structured_features, LidarModel};
use lilo_core::{Grid, PointCloud, PoseSE3, SphericalRangeImage, SriParams, Twist, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Informational criterion outside its envelope.
    Warn(String),
    Skip(String),
}

fn within(limit: Duration, elapsed: Duration, detail: String) -> Outcome {
    if elapsed <= limit {
        Outcome::Pass(format!("{detail}; {:.2?} (limit {:?})", elapsed, limit))
    } else {
        Outcome::Fail(format!("{detail}; took {:.2?}, limit {:?}", elapsed, limit))
    }
}

fn random_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize, invalid: f64) -> MaskedGrid {
    let mut g = MaskedGrid::empty(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if !rng.random_bool(invalid) {
                g.set(i, j, rng.random_range(0.0..1.0));
            }
        }
    }
    g
}

/// Nine products summed in row-major kernel order.
fn dot9(img: &MaskedGrid, k: &Kernel, i: usize, j: usize) -> Option<f64> {
    let mut acc = 0.0;
    for (a, row) in k.iter().enumerate() {
        for (b, w) in row.iter().enumerate() {
            acc += w * img.value(i + a - 1, j + b - 1)?;
        }
    }
    Some(acc)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..100 {
        let img = random_image(&mut rng, 32, 64, 0.05);
        for kernel in [&EDGE_KERNEL, &GROUND_KERNEL] {
            let out = convolve3x3(&img, kernel).expect("32x64 image");
            for i in 0..32 {
                for j in 0..64 {
                    let expected = if i == 0 || j == 0 || i == 31 || j == 63 { None } else { dot9(&img, kernel, i, j) };
                    if out.value(i, j) != expected {
                        mismatches += 1;
                    }
                }
            }
        }
    }

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mask = random_image(&mut rng, 32, 64, 0.1);
        let range = Grid::from_fn(32, 64, |i, j| mask.value(i, j).map_or(0.0, |v| 1.0 + 79.0 * v));
        let img = SphericalRangeImage {
            z_map: Grid::filled(32, 64, 0.0),
            valid: mask.valid.clone(),
            range,
        };
        let out = fft_ground_filter(&img, 0.02).expect("even width");
        let span = out.span;
        for i in 0..32 {
            let vals: Vec<f64> = (0..64).filter(|&j| img.is_valid(i, j)).map(|j| *img.range.get(i, j)).collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            for j in 0..64 {
                match (img.is_valid(i, j), out.filtered.value(i, j)) {
                    (true, Some(v)) => worst = worst.max((v - (img.range.get(i, j) - mean)).abs() / span),
                    (false, None) => {}
                    _ => mismatches += 1,
                }
            }
        }
    }
    let detail = format!("sobel/ground taps exact ({mismatches} mismatches), fft vs row mean {worst:.2e} x span");
    if mismatches > 0 || worst > 1e-6 {
        return Outcome::Fail(detail);
    }
    within(Duration::from_secs(5), t.elapsed(), detail)
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let params = SriParams::hdl64(720);
    let (m, n) = (params.output_height(), params.width);
    let span = params.fov_max - params.fov_min;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_range, mut worst_az) = (0.0f64, 0.0f64);
    let mut count_errors = 0;
    for _ in 0..10 {
        let mut cells: Vec<usize> = (0..m * n).collect();
        for k in 0..1000 {
            let pick = rng.random_range(k..cells.len());
            cells.swap(k, pick);
        }
        cells.truncate(1000);
        cells.sort_unstable();
        let mut truth = Vec::new();
        let points: Vec<Vec3> = cells
            .iter()
            .map(|&c| {
                let (i, j) = (c / n, c % n);
                let theta = PI - (j as f64 + rng.random_range(0.02..0.98)) * 2.0 * PI / n as f64;
                let phi = params.fov_max - (i as f64 + rng.random_range(0.02..0.98)) * span / m as f64;
                let r = rng.random_range(2.0..80.0);
                truth.push((r, theta));
                Vec3::new(r * phi.cos() * theta.cos(), r * phi.cos() * theta.sin(), r * phi.sin())
            })
            .collect();
        let (img, _) = project(&PointCloud::from_points(points), &params);
        let (cloud, _) = reconstruct(&MaskedGrid { values: img.range.clone(), valid: img.valid.clone() }, &img.z_map);
        if cloud.len() != truth.len() {
            count_errors += 1;
            continue;
        }
        // Both sides are in row-major cell order.
        for (p, (r, theta)) in cloud.iter().zip(&truth) {
            worst_range = worst_range.max((p.norm() - r).abs() / r);
            let d = (p.y.atan2(p.x) - theta).rem_euclid(2.0 * PI);
            worst_az = worst_az.max(d.min(2.0 * PI - d));
        }
    }
    let detail = format!("10 clouds x 1000 points: range rel {worst_range:.1e}, azimuth {worst_az:.2e} rad (bound {:.2e})", 2.0 * PI / 720.0);
    if count_errors > 0 || worst_range > 1e-6 || worst_az > 2.0 * PI / 720.0 {
        return Outcome::Fail(format!("{detail}, {count_errors} count mismatches"));
    }
    within(Duration::from_secs(1), t.elapsed(), detail)
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v3 = |s: f64, rng: &mut ChaCha8Rng| Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s));
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let pose = Twist::new(v3(1.5, &mut rng), v3(20.0, &mut rng)).exp();
        let p = v3(30.0, &mut rng);
        let line = Line {
            point: v3(30.0, &mut rng),
            direction: v3(1.0, &mut rng).normalize(),
        };
        let plane = Plane {
            point: v3(30.0, &mut rng),
            normal: v3(1.0, &mut rng).normalize(),
        };
        let h = 1e-6;
        let edge = edge_residual(&pose, &p, &line);
        let surf = surface_residual(&pose, &p, &plane);
        for (analytic, f) in [
            (edge.jacobian, &(|q: &PoseSE3| edge_residual(q, &p, &line).value) as &dyn Fn(&PoseSE3) -> f64),
            (surf.jacobian, &|q: &PoseSE3| surface_residual(q, &p, &plane).value),
        ] {
            let scale = analytic.norm().max(1.0);
            for i in 0..6 {
                let mut d = nalgebra::Vector6::zeros();
                d[i] = h;
                let plus = f(&pose.compose(&Twist::from_vector(&d).exp()));
                let minus = f(&pose.compose(&Twist::from_vector(&(-d)).exp()));
                worst = worst.max(((plus - minus) / (2.0 * h) - analytic[i]).abs() / scale);
            }
        }
    }
    let detail = format!("1000 configurations, worst relative deviation {worst:.1e}");
    if worst > 1e-5 {
        return Outcome::Fail(detail);
    }
    within(Duration::from_secs(5), t.elapsed(), detail)
}

fn unvoxelized_map(f: &FeatureClouds) -> LocalFeatureMap {
    let mut off = VoxelConfig::new(0.1);
    off.enabled = false;
    let mut map = LocalFeatureMap::new(off, off, 100.0);
    map.insert_and_trim(&f.edge, &[&f.surface, &f.ground], &Vec3::zeros());
    map
}

fn recover(map: &LocalFeatureMap, frame: &FeatureClouds, truth: &PoseSE3) -> (f64, f64) {
    let surface: Vec<Vec3> = frame.surface.iter().chain(frame.ground.iter()).copied().collect();
    let cfg = SolverConfig {
        max_iterations: 30,
        ..SolverConfig::default()
    };
    match register(map, &frame.edge.points, &surface, &PoseSE3::identity(), &cfg) {
        Ok(reg) => {
            let err = reg.pose.inverse().compose(truth);
            (err.translation.norm(), err.rotation_angle())
        }
        Err(_) => (f64::INFINITY, f64::INFINITY),
    }
}

fn percentile_95(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1]
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let world = structured_features();
    let truth = PoseSE3::new(PoseSE3::from_yaw(2f64.to_radians()).rotation, Vec3::new(0.3, -0.1, 0.05));
    let to_sensor = truth.inverse();
    let frame = world.transformed(&to_sensor);
    let (et, er) = recover(&unvoxelized_map(&world), &frame, &truth);

    let (mut ts, mut rs) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let map = unvoxelized_map(&jitter(&world, 0.02, 1000 + seed));
        let noisy = jitter(&frame, 0.02, 2000 + seed);
        let (a, b) = recover(&map, &noisy, &truth);
        ts.push(a);
        rs.push(b);
    }
    let (t95, r95) = (percentile_95(ts), percentile_95(rs));
    let detail = format!("noiseless {et:.1e} m / {er:.1e} rad; sigma 0.02 p95 {t95:.4} m / {r95:.5} rad");
    if et > 1e-3 || er > 1e-4 || t95 > 0.02 || r95 > 0.005 {
        return Outcome::Fail(detail);
    }
    within(Duration::from_secs(30), t.elapsed(), detail)
}

fn criterion_5() -> Outcome {
    let frame = structured_features();
    let mut odo = Odometry::new(OdomConfig::default()).expect("default config");
    let first = odo.process(&frame, 0.1).pose;
    let second = odo.process(&frame, 0.1).pose;
    let rel = first.inverse().compose(&second);
    let (dt, dr) = (rel.translation.norm(), rel.rotation_angle());
    let detail = format!("relative pose {dt:.1e} m / {dr:.1e} rad");
    if dt <= 1e-6 && dr <= 1e-7 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let points: Vec<Vec3> = (0..10_000)
        .map(|_| Vec3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-3.0..3.0)))
        .collect();
    let tree = KdTree::new(points.clone());
    let mut mismatches = 0;
    for _ in 0..1000 {
        let q = Vec3::new(rng.random_range(-21.0..21.0), rng.random_range(-21.0..21.0), rng.random_range(-4.0..4.0));
        let mut brute: Vec<(usize, f64)> = points.iter().enumerate().map(|(k, p)| (k, (p - q).norm_squared())).collect();
        let radius: Vec<usize> = brute.iter().filter(|(_, d)| *d <= 1.0).map(|(k, _)| *k).collect();
        let got: Vec<usize> = tree.within_radius(&q, 1.0).into_iter().map(|(k, _)| k).collect();
        mismatches += usize::from(got != radius);
        brute.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let knn: Vec<usize> = brute[..8].iter().map(|(k, _)| *k).collect();
        let got: Vec<usize> = tree.nearest(&q, 8).into_iter().map(|(k, _)| k).collect();
        mismatches += usize::from(got != knn);
    }
    let detail = format!("1000 queries over 10k points, {mismatches} mismatching radius/8-NN results");
    if mismatches == 0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let scene = loop_world(100.0, 50.0, 7);
    let truth = loop_trajectory(100.0, 50.0, 6.0, 5.0, 10.0, 1.73);
    let lidar = LidarModel::hdl64();
    let mut pipeline = Pipeline::new(PipelineConfig::for_profile(SensorProfile::Hdl64)).expect("preset");
    let mut estimate = Vec::with_capacity(truth.len());
    for k in 0..truth.len() {
        // The sensor is already moving during the first sweep.
        let motion = if k == 0 { relative_twist(&truth[0], &truth[1]) } else { relative_twist(&truth[k - 1], &truth[k]) };
        let cloud = lidar.scan(&scene, &truth[k], &motion, k as u64);
        estimate.push(pipeline.process(&cloud, None).pose);
    }
    let c = loop_closure_error(&estimate).expect("many frames");
    let detail = format!(
        "{} frames, closure x={:.3} y={:.3} z={:.3} d={:.3} m (gate 1.0)",
        truth.len(),
        c.x,
        c.y,
        c.z,
        c.d
    );
    if c.d >= 1.0 {
        return Outcome::Fail(detail);
    }
    within(Duration::from_secs(300), t.elapsed(), detail)
}

struct KittiRun {
    ate: f64,
    are_100m: f64,
    frames: usize,
    mean_ms: f64,
    elapsed: Duration,
}

fn kitti_seq04() -> Option<Result<KittiRun, String>> {
    let dir = PathBuf::from(std::env::var_os("LILO_KITTI_SEQ04")?);
    let run = || -> Result<KittiRun, String> {
        let t = Instant::now();
        let poses = std::env::var_os("LILO_KITTI_SEQ04_POSES").map(PathBuf::from).unwrap_or_else(|| dir.join("poses.txt"));
        let truth = read_kitti_poses(&poses).map_err(|e| e.to_string())?;
        let tr = read_kitti_calib(dir.join("calib.txt")).map_err(|e| e.to_string())?;
        let source = FrameSource::open(&dir).map_err(|e| e.to_string())?;
        let mut pipeline = Pipeline::new(PipelineConfig::for_profile(SensorProfile::Hdl64)).map_err(|e| e.to_string())?;
        let mut estimate = Vec::with_capacity(source.len());
        let mut timings = Vec::with_capacity(source.len());
        for k in 0..source.len() {
            let dt = match (k, source.timestamp(k)) {
                (1.., Some(now)) => source.timestamp(k - 1).map(|prev| now - prev),
                _ => None,
            };
            let report = match source.read(k) {
                Ok(frame) => pipeline.process(&frame.cloud, dt),
                Err(_) => pipeline.skip(dt),
            };
            estimate.push(report.pose);
            timings.push(report.timings);
        }
        let report = segment_errors(&change_body_frame(&estimate, &tr), &truth, &KITTI_LENGTHS).map_err(|e| e.to_string())?;
        Ok(KittiRun {
            ate: report.ate_percent,
            are_100m: report.are_deg_per_100m(),
            frames: estimate.len(),
            mean_ms: runtime_profile(&timings).total.mean,
            elapsed: t.elapsed(),
        })
    };
    Some(run())
}

fn criterion_8(run: &Option<Result<KittiRun, String>>) -> Outcome {
    match run {
        None => Outcome::Skip("KITTI sequence 04 not available (set LILO_KITTI_SEQ04)".into()),
        Some(Err(e)) => Outcome::Fail(e.clone()),
        Some(Ok(r)) => {
            let detail = format!("{} frames, ATE {:.3} % (gate 2.0), ARE {:.3} deg/100m (gate 1.0)", r.frames, r.ate, r.are_100m);
            if r.ate > 2.0 || r.are_100m > 1.0 {
                Outcome::Fail(detail)
            } else {
                within(Duration::from_secs(120), r.elapsed, detail)
            }
        }
    }
}

fn criterion_9(run: &Option<Result<KittiRun, String>>) -> Outcome {
    match run {
        None => Outcome::Skip("KITTI sequence 04 not available (set LILO_KITTI_SEQ04)".into()),
        Some(Err(e)) => Outcome::Warn(e.clone()),
        Some(Ok(r)) => {
            let detail = format!("mean total stage time {:.1} ms/frame (envelope 150)", r.mean_ms);
            if r.mean_ms < 150.0 {
                Outcome::Pass(detail)
            } else {
                Outcome::Warn(detail)
            }
        }
    }
}

fn criterion_10() -> Outcome {
    let truth: Vec<PoseSE3> = (0..=900).map(|k| PoseSE3::from_translation(Vec3::new(k as f64, 0.0, 0.0))).collect();
    let est: Vec<PoseSE3> = truth.iter().map(|p| PoseSE3::from_translation(p.translation * 1.01)).collect();
    let r = match segment_errors(&est, &truth, &KITTI_LENGTHS) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let closure = LoopClosureReport::from_components(0.26, 0.85, 0.15);
    let detail = format!("ATE {:.7} %, ARE {:.1e} deg/m, loop-1 d {:.3} m", r.ate_percent, r.are_deg_per_m, closure.d);
    if (r.ate_percent - 1.0).abs() <= 1e-6 && r.are_deg_per_m == 0.0 && (closure.d - 0.90).abs() <= 0.01 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() {
    // A name filter meant for other test targets skips the suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return;
    }

    let kitti = kitti_seq04();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("filter oracles", Box::new(criterion_1)),
        ("projection round trip", Box::new(criterion_2)),
        ("residual jacobians", Box::new(criterion_3)),
        ("rigid-motion recovery", Box::new(criterion_4)),
        ("zero-motion fixed point", Box::new(criterion_5)),
        ("spatial index", Box::new(criterion_6)),
        ("synthetic loop closure", Box::new(criterion_7)),
        ("KITTI 04 drift", Box::new(|| criterion_8(&kitti))),
        ("KITTI 04 runtime", Box::new(|| criterion_9(&kitti))),
        ("metric self-test", Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Warn(d) => ("WARN", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2} [{tag}] {name}: {detail}", k + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
