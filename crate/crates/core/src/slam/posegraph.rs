//! 2D pose graph and its nonlinear least-squares optimizer.

use super::sparse::{BlockCholesky, BlockMatrix};
use crate::pose::{normalize_angle, relative, Pose2D};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Odometry,
    Loop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Measured pose of node `j` in the frame of node `i`.
    pub delta: Pose2D,
    pub information: Matrix3<f64>,
    pub kind: EdgeKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimizeError {
    #[error("node {0} is not connected to node 0")]
    NotConnected(usize),
    #[error("normal equations are rank deficient")]
    RankDeficient,
    #[error("edge ({i}, {j}) is invalid: {reason}")]
    InvalidEdge { i: usize, j: usize, reason: &'static str },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseGraph {
    pub nodes: Vec<Pose2D>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeConfig {
    pub max_iters: usize,
    /// Stop when the relative χ² improvement falls below this.
    pub eps: f64,
    /// Dense solve below this many nodes, sparse above.
    pub dense_limit: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            eps: 1e-9,
            dense_limit: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    /// χ² before the first iteration and after each accepted one.
    pub chi2: Vec<f64>,
    pub iterations: usize,
}

/// `e = Δ⁻¹ ⊕ (x_i⁻¹ ⊕ x_j)` with its Jacobians with respect to `x_i`, `x_j`.
fn edge_error(xi: &Pose2D, xj: &Pose2D, delta: &Pose2D) -> (Vector3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let (si, ci) = xi.theta.sin_cos();
    let (sd, cd) = delta.theta.sin_cos();
    let (dx, dy) = (xj.x - xi.x, xj.y - xi.y);
    // t = R_iᵀ (t_j − t_i)
    let tx = ci * dx + si * dy;
    let ty = -si * dx + ci * dy;
    let (ex, ey) = (tx - delta.x, ty - delta.y);
    let e = Vector3::new(cd * ex + sd * ey, -sd * ex + cd * ey, normalize_angle(xj.theta - xi.theta - delta.theta));
    // ∂t/∂θ_i
    let dtx = -si * dx + ci * dy;
    let dty = -ci * dx - si * dy;
    let rd = |a: f64, b: f64| (cd * a + sd * b, -sd * a + cd * b);
    let (a00, a10) = rd(-ci, si);
    let (a01, a11) = rd(-si, -ci);
    let (a02, a12) = rd(dtx, dty);
    let ja = Matrix3::new(a00, a01, a02, a10, a11, a12, 0.0, 0.0, -1.0);
    let jb = Matrix3::new(-a00, -a01, 0.0, -a10, -a11, 0.0, 0.0, 0.0, 1.0);
    (e, ja, jb)
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, pose: Pose2D) -> usize {
        self.nodes.push(pose);
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<(), OptimizeError> {
        let (i, j) = (edge.i, edge.j);
        if i >= j {
            return Err(OptimizeError::InvalidEdge { i, j, reason: "needs i < j" });
        }
        if j >= self.nodes.len() {
            return Err(OptimizeError::InvalidEdge { i, j, reason: "unknown node" });
        }
        let m = &edge.information;
        if (m - m.transpose()).abs().max() > 1e-9 * m.abs().max().max(1.0) || (0..3).any(|k| m[(k, k)] <= 0.0) {
            return Err(OptimizeError::InvalidEdge {
                i,
                j,
                reason: "information must be symmetric with positive diagonal",
            });
        }
        self.edges.push(edge);
        Ok(())
    }

    pub fn chi2(&self) -> f64 {
        self.chi2_at(&self.nodes)
    }

    fn chi2_at(&self, nodes: &[Pose2D]) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let (r, _, _) = edge_error(&nodes[e.i], &nodes[e.j], &e.delta);
                (r.transpose() * e.information * r)[0]
            })
            .sum()
    }

    fn check_connected(&self) -> Result<(), OptimizeError> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for &m in &adj[k] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(k) => Err(OptimizeError::NotConnected(k)),
            None => Ok(()),
        }
    }

    /// Gauss-Newton with node 0 held fixed. A step that raises χ² is
    /// retried with growing diagonal damping; the accepted χ² sequence is
    /// non-increasing.
    pub fn optimize(&mut self, cfg: &OptimizeConfig) -> Result<OptimizeReport, OptimizeError> {
        let mut chi2 = vec![self.chi2()];
        if self.nodes.len() <= 1 || self.edges.is_empty() {
            return Ok(OptimizeReport { chi2, iterations: 0 });
        }
        self.check_connected()?;
        let n = self.nodes.len() - 1;
        let mut iterations = 0;
        let mut lambda = 0.0;
        while iterations < cfg.max_iters {
            iterations += 1;
            let current = *chi2.last().expect("non-empty");
            if current == 0.0 {
                break;
            }
            let (h, b) = self.normal_equations(n);
            let mut accepted = None;
            for _ in 0..12 {
                let step = solve(&h, &b, lambda, n <= cfg.dense_limit);
                let Some(step) = step else {
                    if lambda == 0.0 {
                        lambda = 1e-6;
                    } else {
                        lambda *= 10.0;
                    }
                    continue;
                };
                let cand: Vec<Pose2D> = std::iter::once(self.nodes[0])
                    .chain(self.nodes[1..].iter().zip(&step).map(|(p, d)| Pose2D::new(p.x + d.x, p.y + d.y, p.theta + d.z)))
                    .collect();
                let c = self.chi2_at(&cand);
                if c <= current {
                    accepted = Some((cand, c));
                    lambda *= 0.1;
                    if lambda < 1e-9 {
                        lambda = 0.0;
                    }
                    break;
                }
                lambda = if lambda == 0.0 { 1e-4 } else { lambda * 10.0 };
            }
            let Some((cand, c)) = accepted else {
                if chi2.len() == 1 && solve(&h, &b, 1e-3, n <= cfg.dense_limit).is_none() {
                    return Err(OptimizeError::RankDeficient);
                }
                break;
            };
            self.nodes = cand;
            chi2.push(c);
            if current - c <= cfg.eps * current {
                break;
            }
        }
        Ok(OptimizeReport { chi2, iterations })
    }

    /// `(H, b)` over nodes 1..=n (node 0 is the gauge), `H Δ = −b`.
    fn normal_equations(&self, n: usize) -> (BlockMatrix, Vec<Vector3<f64>>) {
        let mut h = BlockMatrix::new(n);
        let mut b = vec![Vector3::zeros(); n];
        for e in &self.edges {
            let (r, ja, jb) = edge_error(&self.nodes[e.i], &self.nodes[e.j], &e.delta);
            let w = e.information;
            let (ia, ib) = (e.i.checked_sub(1), e.j - 1);
            if let Some(ia) = ia {
                h.add(ia, ia, &(ja.transpose() * w * ja));
                h.add(ib, ia, &(jb.transpose() * w * ja));
                b[ia] += ja.transpose() * w * r;
            }
            h.add(ib, ib, &(jb.transpose() * w * jb));
            b[ib] += jb.transpose() * w * r;
        }
        (h, b)
    }

    /// g2o text format.
    pub fn write_g2o<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, p) in self.nodes.iter().enumerate() {
            writeln!(out, "VERTEX_SE2 {k} {} {} {}", p.x, p.y, p.theta)?;
        }
        for e in &self.edges {
            let m = &e.information;
            writeln!(
                out,
                "EDGE_SE2 {} {} {} {} {} {} {} {} {} {} {}",
                e.i,
                e.j,
                e.delta.x,
                e.delta.y,
                e.delta.theta,
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 2)]
            )?;
        }
        Ok(())
    }

    /// Relative pose of every edge at the current node estimates.
    pub fn edge_residuals(&self) -> Vec<Pose2D> {
        self.edges
            .iter()
            .map(|e| relative(&relative(&self.nodes[e.j], &self.nodes[e.i]), &e.delta))
            .collect()
    }
}

fn solve(h: &BlockMatrix, b: &[Vector3<f64>], lambda: f64, dense: bool) -> Option<Vec<Vector3<f64>>> {
    let n = h.dim();
    let mut h = h.clone();
    if lambda > 0.0 {
        h.add_to_diagonal(lambda);
    }
    let neg: Vec<Vector3<f64>> = b.iter().map(|v| -v).collect();
    let x = if dense {
        let hd = DMatrix::from_fn(3 * n, 3 * n, |r, c| h.get(r / 3, c / 3)[(r % 3, c % 3)]);
        let bd = DVector::from_iterator(3 * n, neg.iter().flat_map(|v| v.iter().copied()));
        let xd = hd.cholesky()?.solve(&bd);
        (0..n).map(|k| Vector3::new(xd[3 * k], xd[3 * k + 1], xd[3 * k + 2])).collect::<Vec<_>>()
    } else {
        BlockCholesky::factor(&h)?.solve(&neg)
    };
    x.iter().all(|v| v.iter().all(|c| c.is_finite())).then_some(x)
}
