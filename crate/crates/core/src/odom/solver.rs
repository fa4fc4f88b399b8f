//! Gauss-Newton registration of a feature frame against the local map.

use std::time::{Duration, Instant};

use nalgebra::{Matrix6, Vector6};

use super::map::LocalFeatureMap;
use super::residual::{edge_residual, fit_line, fit_plane, surface_residual, FitConfig, Line, Plane, Residual};
use crate::error::{Error, Result};
use crate::geom::{PoseSE3, Twist, Vec3};

/// Parameters of one registration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub neighbor_radius: f64,
    /// Nearest neighbors used per query, within `neighbor_radius`.
    pub max_neighbors: usize,
    pub fit: FitConfig,
    pub max_iterations: usize,
    /// Stop once the update twist norm falls below this.
    pub convergence_eps: f64,
    /// Huber threshold in meters; non-positive means plain least squares.
    pub huber_delta: f64,
    pub min_correspondences: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            neighbor_radius: 1.0,
            max_neighbors: 8,
            fit: FitConfig::default(),
            max_iterations: 10,
            convergence_eps: 1e-4,
            huber_delta: 0.1,
            min_correspondences: 10,
        }
    }
}

/// Costs around one accepted update, evaluated on the same correspondences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationTrace {
    pub correspondences: usize,
    pub cost_before: f64,
    pub cost_after: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub pose: PoseSE3,
    pub iterations: Vec<IterationTrace>,
    pub converged: bool,
    pub association_time: Duration,
    pub optimization_time: Duration,
}

enum Correspondence {
    Edge(Vec3, Line),
    Surface(Vec3, Plane),
}

impl Correspondence {
    fn residual(&self, pose: &PoseSE3) -> Residual {
        match self {
            Correspondence::Edge(p, line) => edge_residual(pose, p, line),
            Correspondence::Surface(p, plane) => surface_residual(pose, p, plane),
        }
    }
}

fn huber(r: f64, delta: f64) -> (f64, f64) {
    let a = r.abs();
    if delta <= 0.0 || a <= delta {
        (0.5 * r * r, 1.0)
    } else {
        (delta * (a - 0.5 * delta), delta / a)
    }
}

fn total_cost(corr: &[Correspondence], pose: &PoseSE3, delta: f64) -> f64 {
    corr.iter().map(|c| huber(c.residual(pose).value, delta).0).sum()
}

fn associate(map: &LocalFeatureMap, edge: &[Vec3], surface: &[Vec3], pose: &PoseSE3, cfg: &SolverConfig) -> Vec<Correspondence> {
    let mut out = Vec::with_capacity(edge.len() + surface.len());
    let mut buf = Vec::with_capacity(cfg.max_neighbors);
    let gather = |layer: &super::map::MapLayer, q: &Vec3, buf: &mut Vec<Vec3>| {
        buf.clear();
        let hits = layer.index().nearest_within(q, cfg.max_neighbors, cfg.neighbor_radius);
        buf.extend(hits.iter().map(|&(k, _)| layer.points()[k]));
    };
    for p in edge {
        gather(&map.edge, &pose.apply(p), &mut buf);
        if let Some(line) = fit_line(&buf, &cfg.fit) {
            out.push(Correspondence::Edge(*p, line));
        }
    }
    for p in surface {
        gather(&map.surface, &pose.apply(p), &mut buf);
        if let Some(plane) = fit_plane(&buf, &cfg.fit) {
            out.push(Correspondence::Surface(*p, plane));
        }
    }
    out
}

/// Registers sensor-frame `edge` and `surface` points against `map`, starting
/// at `initial`. Correspondences are re-associated at every iteration. Steps
/// that would raise the cost are halved, up to a few times, before giving up.
pub fn register(map: &LocalFeatureMap, edge: &[Vec3], surface: &[Vec3], initial: &PoseSE3, cfg: &SolverConfig) -> Result<Registration> {
    let mut pose = *initial;
    let mut iterations = Vec::new();
    let mut converged = false;
    let mut association_time = Duration::ZERO;
    let mut optimization_time = Duration::ZERO;

    for _ in 0..cfg.max_iterations.max(1) {
        let t0 = Instant::now();
        let corr = associate(map, edge, surface, &pose, cfg);
        association_time += t0.elapsed();
        if corr.len() < cfg.min_correspondences {
            return Err(Error::InsufficientConstraints {
                found: corr.len(),
                required: cfg.min_correspondences,
            });
        }

        let t1 = Instant::now();
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        let mut cost_before = 0.0;
        for c in &corr {
            let r = c.residual(&pose);
            let (rho, w) = huber(r.value, cfg.huber_delta);
            cost_before += rho;
            let jt = r.jacobian.transpose();
            h += w * jt * r.jacobian;
            g += w * r.value * jt;
        }
        let Some(step) = solve(&h, &g) else {
            optimization_time += t1.elapsed();
            break;
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..6 {
            let candidate = pose.compose(&Twist::from_vector(&(step * scale)).exp());
            let cost_after = total_cost(&corr, &candidate, cfg.huber_delta);
            if cost_after <= cost_before {
                accepted = Some((candidate, cost_after));
                break;
            }
            scale *= 0.5;
        }
        optimization_time += t1.elapsed();

        let Some((candidate, cost_after)) = accepted else {
            converged = true;
            break;
        };
        let step_norm = step.norm() * scale;
        pose = candidate;
        iterations.push(IterationTrace {
            correspondences: corr.len(),
            cost_before,
            cost_after,
            step_norm,
        });
        if step_norm < cfg.convergence_eps {
            converged = true;
            break;
        }
    }

    Ok(Registration {
        pose,
        iterations,
        converged,
        association_time,
        optimization_time,
    })
}

fn solve(h: &Matrix6<f64>, g: &Vector6<f64>) -> Option<Vector6<f64>> {
    let rhs = -g;
    if let Some(chol) = h.cholesky() {
        return Some(chol.solve(&rhs));
    }
    // Rank-deficient geometry (e.g. a lone plane): damp the free directions.
    let damped = h + Matrix6::identity() * (1e-9 * h.trace().max(1e-12));
    damped.cholesky().map(|c| c.solve(&rhs))
}
