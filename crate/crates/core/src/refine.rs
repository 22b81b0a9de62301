//! Continuous pose refinement on the probability grid: damped Gauss-Newton
//! on `J(ξ) = Σ (1 − M(h(ξ, z_k)))²` and greedy hill climbing.

use crate::grid::GridMap;
use crate::pose::{Pose2D, Scan};
use nalgebra::{Matrix3, Vector3};

/// Bilinear view of a grid's probabilities, with samples at cell centers.
#[derive(Debug, Clone, Copy)]
pub struct InterpolatedMapView<'a> {
    map: &'a GridMap,
}

impl<'a> InterpolatedMapView<'a> {
    pub fn new(map: &'a GridMap) -> Self {
        Self { map }
    }

    pub fn map(&self) -> &GridMap {
        self.map
    }

    fn corners(&self, x: f64, y: f64) -> ([f64; 4], f64, f64) {
        let r = self.map.resolution();
        let (ox, oy) = self.map.origin();
        let u = (x - ox) / r - 0.5;
        let v = (y - oy) / r - 0.5;
        let (i0, j0) = (u.floor(), v.floor());
        let (i, j) = (i0 as i32, j0 as i32);
        let p = |di: i32, dj: i32| self.map.probability(crate::pose::CellIndex::new(i + di, j + dj));
        ([p(0, 0), p(1, 0), p(0, 1), p(1, 1)], u - i0, v - j0)
    }

    /// `Mc(x, y)` in `[0, 1]`.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let ([p00, p10, p01, p11], fu, fv) = self.corners(x, y);
        (1.0 - fv) * ((1.0 - fu) * p00 + fu * p10) + fv * ((1.0 - fu) * p01 + fu * p11)
    }

    /// `(Mc, ∂Mc/∂x, ∂Mc/∂y)`.
    pub fn value_and_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let ([p00, p10, p01, p11], fu, fv) = self.corners(x, y);
        let r = self.map.resolution();
        let m = (1.0 - fv) * ((1.0 - fu) * p00 + fu * p10) + fv * ((1.0 - fu) * p01 + fu * p11);
        let dx = ((1.0 - fv) * (p10 - p00) + fv * (p11 - p01)) / r;
        let dy = ((1.0 - fu) * (p01 - p00) + fu * (p11 - p10)) / r;
        (m, dx, dy)
    }
}

fn local_points(scan: &Scan) -> Vec<(f64, f64)> {
    scan.points.iter().map(|p| p.to_xy()).collect()
}

/// `J(ξ)` for points given in the sensor frame.
pub fn cost(view: &InterpolatedMapView<'_>, points: &[(f64, f64)], xi: &Pose2D) -> f64 {
    points
        .iter()
        .map(|&(px, py)| {
            let (wx, wy) = xi.transform_point(px, py);
            let r = 1.0 - view.value(wx, wy);
            r * r
        })
        .sum()
}

/// Normal equations `(Σ JᵀJ, Σ Jᵀr, cost)` with `J = ∂r/∂ξ`.
fn normal_equations(view: &InterpolatedMapView<'_>, points: &[(f64, f64)], xi: &Pose2D) -> (Matrix3<f64>, Vector3<f64>, f64) {
    let (s, c) = xi.theta.sin_cos();
    let mut h = Matrix3::zeros();
    let mut g = Vector3::zeros();
    let mut total = 0.0;
    for &(px, py) in points {
        let wx = c * px - s * py + xi.x;
        let wy = s * px + c * py + xi.y;
        let (m, dmx, dmy) = view.value_and_gradient(wx, wy);
        let r = 1.0 - m;
        let dth = dmx * (-s * px - c * py) + dmy * (c * px - s * py);
        let j = Vector3::new(-dmx, -dmy, -dth);
        h += j * j.transpose();
        g += j * r;
        total += r * r;
    }
    (h, g, total)
}

/// Analytic `∇J(ξ)` as `(∂/∂x, ∂/∂y, ∂/∂θ)`.
pub fn cost_gradient(view: &InterpolatedMapView<'_>, points: &[(f64, f64)], xi: &Pose2D) -> [f64; 3] {
    let (_, g, _) = normal_equations(view, points, xi);
    [2.0 * g.x, 2.0 * g.y, 2.0 * g.z]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonConfig {
    pub max_iters: usize,
    /// Convergence threshold on `|Δξ|`, meters and radians mixed.
    pub eps: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
    pub max_halvings: usize,
}

impl Default for GaussNewtonConfig {
    fn default() -> Self {
        Self {
            max_iters: 30,
            eps: 1e-4,
            initial_damping: 1e-6,
            max_damping: 1e8,
            max_halvings: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussNewtonStatus {
    Converged,
    MaxIterations,
    /// No step improved the cost within the halving budget.
    Stalled,
    /// Damping grew past its limit without a solvable system; the initial
    /// pose is returned.
    SingularHessian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonOutcome {
    pub pose: Pose2D,
    pub cost: f64,
    pub iterations: usize,
    pub status: GaussNewtonStatus,
    /// Cost after each accepted step, starting with the initial cost.
    pub accepted_costs: Vec<f64>,
}

/// Damped Gauss-Newton refinement of `xi_init`. Steps that raise the cost
/// are halved up to `max_halvings` times, after which the search stops.
pub fn gauss_newton(view: &InterpolatedMapView<'_>, scan: &Scan, xi_init: &Pose2D, cfg: &GaussNewtonConfig) -> GaussNewtonOutcome {
    gauss_newton_points(view, &local_points(scan), xi_init, cfg)
}

pub fn gauss_newton_points(
    view: &InterpolatedMapView<'_>,
    points: &[(f64, f64)],
    xi_init: &Pose2D,
    cfg: &GaussNewtonConfig,
) -> GaussNewtonOutcome {
    let mut xi = *xi_init;
    let mut current = cost(view, points, &xi);
    let mut accepted = vec![current];
    let mut status = GaussNewtonStatus::MaxIterations;
    let mut iterations = 0;
    let singular = |c: f64, it| GaussNewtonOutcome {
        pose: *xi_init,
        cost: c,
        iterations: it,
        status: GaussNewtonStatus::SingularHessian,
        accepted_costs: vec![c],
    };
    if points.is_empty() {
        return singular(current, 0);
    }
    while iterations < cfg.max_iters {
        iterations += 1;
        let (h, g, _) = normal_equations(view, points, &xi);
        let mut lambda = cfg.initial_damping;
        let delta = loop {
            let damped = h + Matrix3::identity() * lambda;
            if let Some(ch) = damped.cholesky() {
                let d = -ch.solve(&g);
                if d.iter().all(|v| v.is_finite()) {
                    break d;
                }
            }
            lambda *= 10.0;
            if lambda > cfg.max_damping {
                return singular(cost(view, points, xi_init), iterations);
            }
        };
        if delta.norm() < cfg.eps {
            status = GaussNewtonStatus::Converged;
            break;
        }
        let mut step = 1.0;
        let mut moved = None;
        for _ in 0..=cfg.max_halvings {
            let cand = Pose2D::new(xi.x + step * delta.x, xi.y + step * delta.y, xi.theta + step * delta.z);
            let c = cost(view, points, &cand);
            if c <= current {
                moved = Some((cand, c));
                break;
            }
            step *= 0.5;
        }
        match moved {
            Some((cand, c)) => {
                xi = cand;
                current = c;
                accepted.push(c);
                if step * delta.norm() < cfg.eps {
                    status = GaussNewtonStatus::Converged;
                    break;
                }
            }
            None => {
                status = GaussNewtonStatus::Stalled;
                break;
            }
        }
    }
    GaussNewtonOutcome {
        pose: xi,
        cost: current,
        iterations,
        status,
        accepted_costs: accepted,
    }
}

/// `Σ_k M(h(ξ, z_k))` with cell lookups on the probability grid.
pub fn grid_score(map: &GridMap, points: &[(f64, f64)], xi: &Pose2D) -> f64 {
    points
        .iter()
        .map(|&(px, py)| {
            let (wx, wy) = xi.transform_point(px, py);
            map.probability(map.world_to_cell(wx, wy))
        })
        .sum()
}

/// Same sum with the bilinear map.
pub fn interpolated_score(view: &InterpolatedMapView<'_>, points: &[(f64, f64)], xi: &Pose2D) -> f64 {
    points
        .iter()
        .map(|&(px, py)| {
            let (wx, wy) = xi.transform_point(px, py);
            view.value(wx, wy)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillClimbConfig {
    pub linear_step: f64,
    pub angular_step: f64,
    pub shrink: f64,
    pub min_step: f64,
}

impl HillClimbConfig {
    /// Initial steps of half the matcher's steps.
    pub fn for_steps(r: f64, dtheta: f64) -> Self {
        Self {
            linear_step: r / 2.0,
            angular_step: dtheta / 2.0,
            shrink: 0.5,
            min_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HillClimbOutcome {
    pub pose: Pose2D,
    pub score: f64,
    pub initial_score: f64,
    pub evaluations: usize,
}

/// Greedy search over `±x, ±y, ±θ` moves. The best strictly improving move
/// is taken; when none improves, both steps shrink, until both are below
/// `min_step`.
pub fn hill_climb(score: impl Fn(&Pose2D) -> f64, xi_init: &Pose2D, cfg: &HillClimbConfig) -> HillClimbOutcome {
    let mut xi = *xi_init;
    let initial = score(&xi);
    let mut best = initial;
    let (mut dl, mut dt) = (cfg.linear_step, cfg.angular_step);
    let mut evaluations = 1;
    let shrink = if cfg.shrink > 0.0 && cfg.shrink < 1.0 { cfg.shrink } else { 0.5 };
    while dl >= cfg.min_step || dt >= cfg.min_step {
        let moves = [(dl, 0.0, 0.0), (-dl, 0.0, 0.0), (0.0, dl, 0.0), (0.0, -dl, 0.0), (0.0, 0.0, dt), (0.0, 0.0, -dt)];
        let mut improved = None;
        for (mx, my, mt) in moves {
            let cand = Pose2D::new(xi.x + mx, xi.y + my, xi.theta + mt);
            let s = score(&cand);
            evaluations += 1;
            if s > improved.map_or(best, |(_, b)| b) {
                improved = Some((cand, s));
            }
        }
        match improved {
            Some((cand, s)) => {
                xi = cand;
                best = s;
            }
            None => {
                dl *= shrink;
                dt *= shrink;
            }
        }
    }
    HillClimbOutcome {
        pose: xi,
        score: best,
        initial_score: initial,
        evaluations,
    }
}

/// Hill climbing on the grid score of `scan`.
pub fn hill_climb_scan(map: &GridMap, scan: &Scan, xi_init: &Pose2D, cfg: &HillClimbConfig) -> HillClimbOutcome {
    let pts = local_points(scan);
    hill_climb(|xi| grid_score(map, &pts, xi), xi_init, cfg)
}
