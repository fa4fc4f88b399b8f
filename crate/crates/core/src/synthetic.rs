//! Synthetic worlds, trajectories and a ray-cast spinning LiDAR, for tests,
//! benchmarks and demos.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::PointCloud;
use crate::geom::{PoseSE3, Twist, Vec3};
use crate::recon::FeatureClouds;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

/// Vertical cylinder without caps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// Ground plane at `z = 0` plus boxes and poles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub ground: bool,
    pub boxes: Vec<Aabb>,
    pub cylinders: Vec<Cylinder>,
}

fn ray_box(o: &Vec3, d: &Vec3, b: &Aabb) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[k];
        let (a, c) = ((b.min[k] - o[k]) * inv, (b.max[k] - o[k]) * inv);
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

fn ray_cylinder(o: &Vec3, d: &Vec3, c: &Cylinder) -> Option<f64> {
    let (ox, oy) = (o.x - c.x, o.y - c.y);
    let a = d.x * d.x + d.y * d.y;
    if a < 1e-15 {
        return None;
    }
    let b = 2.0 * (ox * d.x + oy * d.y);
    let cc = ox * ox + oy * oy - c.radius * c.radius;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
        .into_iter()
        .filter(|&t| t > 0.0)
        .find(|&t| {
            let z = o.z + t * d.z;
            z >= c.z_min && z <= c.z_max
        })
}

impl Scene {
    /// Distance along the unit ray `dir` to the first surface.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let mut best = f64::INFINITY;
        if self.ground && dir.z < 0.0 && origin.z > 0.0 {
            best = -origin.z / dir.z;
        }
        for b in &self.boxes {
            if let Some(t) = ray_box(origin, dir, b) {
                best = best.min(t);
            }
        }
        for c in &self.cylinders {
            if let Some(t) = ray_cylinder(origin, dir, c) {
                best = best.min(t);
            }
        }
        best.is_finite().then_some(best)
    }
}

/// Spinning multi-beam sensor. Beams and firing azimuths sit at the centers
/// of the matching range-image cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarModel {
    pub n_beams: usize,
    pub fov_min: f64,
    pub fov_max: f64,
    pub columns: usize,
    pub max_range: f64,
    pub range_noise: f64,
}

impl LidarModel {
    pub fn hdl64() -> Self {
        Self {
            n_beams: 64,
            fov_min: (-24.8f64).to_radians(),
            fov_max: 2.0f64.to_radians(),
            columns: 720,
            max_range: 100.0,
            range_noise: 0.0,
        }
    }

    pub fn vlp16() -> Self {
        Self {
            n_beams: 16,
            fov_min: (-15.0f64).to_radians(),
            fov_max: 15.0f64.to_radians(),
            columns: 720,
            max_range: 100.0,
            range_noise: 0.0,
        }
    }

    fn elevation(&self, beam: usize) -> f64 {
        self.fov_max - (beam as f64 + 0.5) * (self.fov_max - self.fov_min) / self.n_beams as f64
    }

    /// One sweep ending at world pose `end` while the sensor moves by
    /// `motion` (body twist over the whole sweep). Like a real sensor, each
    /// point is reported in the sensor frame at its own firing time, so the
    /// cloud is skewed unless `motion` is zero.
    pub fn scan(&self, scene: &Scene, end: &PoseSE3, motion: &Twist, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.range_noise.max(0.0)).expect("finite sigma");
        let mut points = Vec::with_capacity(self.n_beams * self.columns);
        for c in 0..self.columns {
            let f = (c as f64 + 0.5) / self.columns as f64;
            let local = motion.scale(f - 1.0).exp();
            let pose = end.compose(&local);
            let az = PI - TAU * f;
            for beam in 0..self.n_beams {
                let el = self.elevation(beam);
                let dir = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                let world_dir = pose.rotation * dir;
                let Some(mut r) = scene.raycast(&pose.translation, &world_dir) else {
                    continue;
                };
                if r > self.max_range {
                    continue;
                }
                if self.range_noise > 0.0 {
                    r += noise.sample(&mut rng);
                }
                points.push(dir * r);
            }
        }
        PointCloud::from_points(points)
    }
}

/// City-block world around the rectangular loop `[0, width] × [0, height]`:
/// building rows on both sides of the road with gaps, poles along the curbs.
pub fn loop_world(width: f64, height: f64, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene {
        ground: true,
        ..Scene::default()
    };
    // Each road side: start, unit direction, length, outward normal.
    let sides = [
        (Vec3::new(0.0, 0.0, 0.0), Vec3::x(), width, -Vec3::y()),
        (Vec3::new(width, 0.0, 0.0), Vec3::y(), height, Vec3::x()),
        (Vec3::new(width, height, 0.0), -Vec3::x(), width, Vec3::y()),
        (Vec3::new(0.0, height, 0.0), -Vec3::y(), height, -Vec3::x()),
    ];
    for (start, dir, len, out) in sides {
        for side in [1.0, -1.0] {
            let normal = out * side;
            let setback = if side > 0.0 { 9.0 } else { 8.0 };
            let mut s = -12.0;
            while s < len + 12.0 {
                let length = rng.random_range(6.0..16.0);
                let depth = rng.random_range(5.0..9.0);
                let tall = rng.random_range(5.0..14.0);
                let near = setback + rng.random_range(-1.0..1.5);
                let a = start + dir * s + normal * near;
                let b = start + dir * (s + length) + normal * (near + depth);
                let aabb = Aabb {
                    min: Vec3::new(a.x.min(b.x), a.y.min(b.y), 0.0),
                    max: Vec3::new(a.x.max(b.x), a.y.max(b.y), tall),
                };
                if side < 0.0 && !inside_block(&aabb, width, height) {
                    s += length + rng.random_range(3.0..7.0);
                    continue;
                }
                scene.boxes.push(aabb);
                s += length + rng.random_range(3.0..7.0);
            }
            // Poles stay off the rounded corners.
            let mut s = rng.random_range(8.0..12.0);
            while s < len - 8.0 {
                let p = start + dir * s + normal * (4.5 + rng.random_range(-0.3..0.3));
                scene.cylinders.push(Cylinder {
                    x: p.x,
                    y: p.y,
                    radius: rng.random_range(0.12..0.3),
                    z_min: 0.0,
                    z_max: rng.random_range(4.0..8.0),
                });
                s += rng.random_range(9.0..16.0);
            }
        }
    }
    scene
}

/// Inner buildings must stay clear of the road on every side.
fn inside_block(b: &Aabb, width: f64, height: f64) -> bool {
    let m = 6.0;
    b.min.x >= m && b.max.x <= width - m && b.min.y >= m && b.max.y <= height - m
}

/// Closed drive around `[0, width] × [0, height]` at constant speed, corners
/// rounded with `corner_radius`. Returns `frames + 1` world poses of a sensor
/// mounted `sensor_height` above the ground; the last pose equals the first.
pub fn loop_trajectory(width: f64, height: f64, corner_radius: f64, speed: f64, rate_hz: f64, sensor_height: f64) -> Vec<PoseSE3> {
    let r = corner_radius;
    let straight = [width - 2.0 * r, height - 2.0 * r, width - 2.0 * r, height - 2.0 * r];
    let arc = FRAC_PI_2 * r;
    let perimeter: f64 = straight.iter().sum::<f64>() + 4.0 * arc;
    let frames = (perimeter / (speed / rate_hz)).round().max(1.0) as usize;
    let step = perimeter / frames as f64;
    (0..=frames)
        .map(|k| {
            let s = if k == frames { 0.0 } else { k as f64 * step };
            let (x, y, yaw) = rounded_rect_point(width, height, r, s);
            PoseSE3::new(PoseSE3::from_yaw(yaw).rotation, Vec3::new(x, y, sensor_height))
        })
        .collect()
}

fn rounded_rect_point(w: f64, h: f64, r: f64, mut s: f64) -> (f64, f64, f64) {
    let legs = [w - 2.0 * r, h - 2.0 * r, w - 2.0 * r, h - 2.0 * r];
    let corners = [(w - r, r), (w - r, h - r), (r, h - r), (r, r)];
    let starts = [(r, 0.0), (w, r), (w - r, h), (0.0, h - r)];
    let arc = FRAC_PI_2 * r;
    for k in 0..4 {
        let yaw0 = k as f64 * FRAC_PI_2;
        let dir = (yaw0.cos(), yaw0.sin());
        if s <= legs[k] {
            return (starts[k].0 + dir.0 * s, starts[k].1 + dir.1 * s, wrap(yaw0));
        }
        s -= legs[k];
        if s <= arc {
            let a = s / r;
            let (cx, cy) = corners[k];
            let phi = yaw0 - FRAC_PI_2 + a;
            return (cx + r * phi.cos(), cy + r * phi.sin(), wrap(yaw0 + a));
        }
        s -= arc;
    }
    (starts[0].0, starts[0].1, 0.0)
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

/// Body twist taking pose `a` to pose `b`.
pub fn relative_twist(a: &PoseSE3, b: &PoseSE3) -> Twist {
    a.inverse().compose(b).log().unwrap_or_else(|_| Twist::zero())
}

/// Sensor-frame feature clouds of three disjoint orthogonal planar patches
/// and four vertical poles, sampled on regular grids.
pub fn structured_features() -> FeatureClouds {
    let grid = |origin: Vec3, u: Vec3, v: Vec3, n: usize, step: f64| {
        let mut out = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                out.push(origin + u * (a as f64 * step) + v * (b as f64 * step));
            }
        }
        out
    };
    let ground = grid(Vec3::new(-6.0, -6.0, -1.8), Vec3::x(), Vec3::y(), 31, 0.4);
    let mut surface = grid(Vec3::new(9.0, -5.0, -1.0), Vec3::y(), Vec3::z(), 21, 0.4);
    surface.extend(grid(Vec3::new(-5.0, 10.0, -1.0), Vec3::x(), Vec3::z(), 21, 0.4));
    let mut edge = Vec::new();
    for (x, y) in [(3.0, 3.5), (-3.5, 4.0), (4.0, -3.0), (-4.5, -4.0)] {
        edge.extend((0..40).map(|k| Vec3::new(x, y, -1.2 + k as f64 * 0.15)));
    }
    FeatureClouds {
        edge: PointCloud::from_points(edge),
        surface: PointCloud::from_points(surface),
        ground: PointCloud::from_points(ground),
    }
}

/// Adds isotropic Gaussian noise to every point.
pub fn jitter(f: &FeatureClouds, sigma: f64, seed: u64) -> FeatureClouds {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    f.map_clouds(|c| c.iter().map(|p| p + Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng))).collect())
}
