//! Graph SLAM. The frontend aligns each scan with the current submap and
//! emits nodes and finished submaps; the backend owns the pose graph,
//! searches for loops against old submaps and sends back optimized poses.
//! The two halves only talk through [`ToBackend`] and [`PoseSnapshot`]
//! messages and each drives its own matcher.

use super::posegraph::{Edge, EdgeKind, OptimizeConfig, PoseGraph};
use super::{local_window, micros, SlamError, StepTimings, WindowConfig};
use crate::csm::{Algorithm, CsmEngine, FixedScan, MatchQuery};
use crate::grid::{GridMap, LogOddsModel, DEFAULT_RESOLUTION};
use crate::pose::{relative, Pose2D, Scan};
use crate::refine::{gauss_newton, GaussNewtonConfig, InterpolatedMapView};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub enabled: bool,
    /// Acceptance threshold on `s*/N`, in 6-bit units.
    pub score_threshold: f64,
    /// Only submaps whose anchor lies within this distance are tried.
    pub search_radius: f64,
    pub window: WindowConfig,
    /// Minimum node distance between a scan and the last node of a submap.
    pub min_node_separation: usize,
    /// Try loop closure for every `stride`-th node.
    pub stride: usize,
    /// Information of a perfect loop match, scaled by `(s*/(63N))²`.
    pub base_sigma: (f64, f64),
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            score_threshold: 0.65 * 63.0,
            search_radius: 10.0,
            window: WindowConfig::new(2.5, 2.5, 0.5),
            min_node_separation: 60,
            stride: 5,
            base_sigma: (0.02, 0.01),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub resolution: f64,
    pub window: WindowConfig,
    pub submap_scans: usize,
    /// Odometry edge standard deviations `(σ_xy, σ_θ)`.
    pub edge_sigma: (f64, f64),
    /// Matches below this `s*/N` fall back to odometry.
    pub degenerate_score: f64,
    /// Information divisor for odometry-only edges.
    pub degenerate_inflation: f64,
    pub refine: bool,
    pub loops: LoopConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            window: WindowConfig::new(0.25, 0.25, 0.5),
            submap_scans: 30,
            edge_sigma: (0.05, 0.02),
            degenerate_score: 0.2 * 63.0,
            degenerate_inflation: 100.0,
            refine: true,
            loops: LoopConfig::default(),
        }
    }
}

/// Grid built from a run of consecutive scans, in the frame of its
/// anchor node.
#[derive(Debug, Clone, PartialEq)]
pub struct Submap {
    pub id: usize,
    pub anchor: usize,
    /// World pose of the anchor node as last known.
    pub origin: Pose2D,
    pub grid: GridMap,
    pub first_node: usize,
    pub last_node: usize,
    pub scans: usize,
    pub finished: bool,
}

/// Frontend → backend.
#[derive(Debug, Clone)]
pub enum ToBackend {
    Node {
        id: usize,
        pose: Pose2D,
        scan: Scan,
        /// Edge from the previous node, absent for node 0.
        edge: Option<(Pose2D, Matrix3<f64>)>,
    },
    SubmapFinished(Submap),
}

/// Backend → frontend: optimized world poses of nodes `0..poses.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSnapshot {
    pub poses: Vec<Pose2D>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FrontendReport {
    pub score: u32,
    pub degenerate: bool,
    pub score_evals: u64,
}

pub struct Frontend {
    cfg: GraphConfig,
    model: LogOddsModel,
    engine: CsmEngine,
    pose: Pose2D,
    nodes: usize,
    active: VecDeque<Submap>,
    next_submap: usize,
    /// World poses of nodes as known to the frontend.
    poses: Vec<Pose2D>,
}

impl Frontend {
    pub fn new(cfg: GraphConfig, model: LogOddsModel) -> Self {
        Self {
            cfg,
            model,
            engine: CsmEngine::new(Algorithm::Optimized),
            pose: Pose2D::identity(),
            nodes: 0,
            active: VecDeque::new(),
            next_submap: 0,
            poses: Vec::new(),
        }
    }

    pub fn pose(&self) -> Pose2D {
        self.pose
    }

    pub fn engine(&self) -> &CsmEngine {
        &self.engine
    }

    pub fn active_submaps(&self) -> impl Iterator<Item = &Submap> {
        self.active.iter()
    }

    fn edge_information(&self, inflate: bool) -> Matrix3<f64> {
        let (sxy, st) = self.cfg.edge_sigma;
        let m = Matrix3::from_diagonal(&Vector3::new(1.0 / (sxy * sxy), 1.0 / (sxy * sxy), 1.0 / (st * st)));
        if inflate {
            m / self.cfg.degenerate_inflation
        } else {
            m
        }
    }

    fn open_submap(&mut self, anchor: usize, origin: Pose2D) {
        self.active.push_back(Submap {
            id: self.next_submap,
            anchor,
            origin,
            grid: GridMap::centered((0.0, 0.0), 8.0, self.cfg.resolution),
            first_node: anchor,
            last_node: anchor,
            scans: 0,
            finished: false,
        });
        self.next_submap += 1;
    }

    pub fn step(&mut self, scan: &Scan, odometry: &Pose2D, timings: &mut StepTimings) -> Result<(Vec<ToBackend>, FrontendReport), SlamError> {
        let mut out = Vec::new();
        let mut report = FrontendReport::default();
        let id = self.nodes;
        let evals_before = self.engine.stats().score_evals;
        let mut edge = None;
        if id == 0 {
            self.pose = Pose2D::identity();
            self.open_submap(0, self.pose);
        } else {
            let predicted = self.pose.compose(odometry);
            let target = &self.active[0];
            let local_pred = relative(&predicted, &target.origin);
            let mut local = local_pred;
            let mut degenerate = true;
            if target.scans > 0 && !scan.is_empty() {
                let t = Instant::now();
                let window = self.cfg.window.search_window(target.grid.resolution(), scan);
                let result = self.engine.submit(MatchQuery {
                    map: Some(local_window(&target.grid, &local_pred)?),
                    scan: Some(FixedScan::from_scan(scan)),
                    xi0: local_pred,
                    window,
                })?;
                timings.matching_us += micros(t);
                report.score = result.score;
                degenerate = result.normalized_score(scan.len()) < self.cfg.degenerate_score;
                if !degenerate {
                    local = result.pose;
                    if self.cfg.refine {
                        let t = Instant::now();
                        let view = InterpolatedMapView::new(&target.grid);
                        local = gauss_newton(&view, scan, &local, &GaussNewtonConfig::default()).pose;
                        timings.refinement_us += micros(t);
                    }
                }
            }
            report.degenerate = degenerate;
            let world = target.origin.compose(&local);
            let prev = self.poses[id - 1];
            edge = Some((relative(&world, &prev), self.edge_information(degenerate)));
            self.pose = world;
        }
        self.poses.push(self.pose);
        self.nodes += 1;

        let t = Instant::now();
        for sm in &mut self.active {
            let local = relative(&self.pose, &sm.origin);
            sm.grid.update(scan, &local, &self.model);
            sm.scans += 1;
            sm.last_node = id;
        }
        timings.map_update_us += micros(t);
        out.push(ToBackend::Node {
            id,
            pose: self.pose,
            scan: scan.clone(),
            edge,
        });
        let k = self.cfg.submap_scans.max(2);
        if id > 0 && id % (k / 2) == 0 {
            self.open_submap(id, self.pose);
            // the new submap starts with this scan already in it
            let sm = self.active.back_mut().expect("just opened");
            sm.grid.update(scan, &Pose2D::identity(), &self.model);
            sm.scans = 1;
        }
        while self.active.front().is_some_and(|s| s.scans >= k) {
            let mut done = self.active.pop_front().expect("checked");
            done.finished = true;
            out.push(ToBackend::SubmapFinished(done));
        }
        report.score_evals = self.engine.stats().score_evals - evals_before;
        Ok((out, report))
    }

    /// Adopts optimized poses: submap origins follow their anchors and the
    /// current pose follows the last node.
    pub fn apply(&mut self, snapshot: &PoseSnapshot) {
        for (k, p) in snapshot.poses.iter().enumerate().take(self.poses.len()) {
            self.poses[k] = *p;
        }
        for sm in &mut self.active {
            if let Some(p) = snapshot.poses.get(sm.anchor) {
                sm.origin = *p;
            }
        }
        if let Some(last) = self.poses.last() {
            self.pose = *last;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopClosure {
    pub node: usize,
    pub submap: usize,
    pub anchor: usize,
    pub normalized_score: f64,
    pub delta: (f64, f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BackendReport {
    pub loop_candidates: usize,
    pub loops: Vec<LoopClosure>,
    pub optimized: bool,
    pub chi2_before: f64,
    pub chi2_after: f64,
    pub score_evals: u64,
}

pub struct Backend {
    cfg: GraphConfig,
    engine: CsmEngine,
    graph: PoseGraph,
    scans: Vec<Scan>,
    finished: Vec<Submap>,
    pending: Vec<usize>,
    loops: Vec<LoopClosure>,
}

impl Backend {
    pub fn new(cfg: GraphConfig) -> Self {
        Self {
            cfg,
            engine: CsmEngine::new(Algorithm::Optimized),
            graph: PoseGraph::new(),
            scans: Vec::new(),
            finished: Vec::new(),
            pending: Vec::new(),
            loops: Vec::new(),
        }
    }

    pub fn graph(&self) -> &PoseGraph {
        &self.graph
    }

    pub fn engine(&self) -> &CsmEngine {
        &self.engine
    }

    pub fn finished_submaps(&self) -> &[Submap] {
        &self.finished
    }

    pub fn loops(&self) -> &[LoopClosure] {
        &self.loops
    }

    pub fn receive(&mut self, msg: ToBackend) -> Result<(), SlamError> {
        match msg {
            ToBackend::Node { id, pose, scan, edge } => {
                debug_assert_eq!(id, self.graph.nodes.len());
                // a new node hangs off the (possibly optimized) previous one
                let pose = match (edge, id.checked_sub(1)) {
                    (Some((delta, information)), Some(prev)) => {
                        let p = self.graph.nodes[prev].compose(&delta);
                        self.graph.add_node(p);
                        self.graph.add_edge(Edge {
                            i: prev,
                            j: id,
                            delta,
                            information,
                            kind: EdgeKind::Odometry,
                        })?;
                        p
                    }
                    _ => {
                        self.graph.add_node(pose);
                        pose
                    }
                };
                let _ = pose;
                self.scans.push(scan);
                if self.cfg.loops.enabled && id % self.cfg.loops.stride.max(1) == 0 {
                    self.pending.push(id);
                }
            }
            ToBackend::SubmapFinished(mut sm) => {
                sm.origin = self.graph.nodes[sm.anchor];
                self.finished.push(sm);
            }
        }
        Ok(())
    }

    /// Loop candidates for `node`: finished submaps far enough back in
    /// time whose anchor lies within the search radius.
    pub fn candidates(&self, node: usize) -> Vec<usize> {
        let pose = self.graph.nodes[node];
        let lc = &self.cfg.loops;
        self.finished
            .iter()
            .enumerate()
            .filter(|(_, sm)| sm.last_node + lc.min_node_separation <= node)
            .filter(|(_, sm)| {
                let a = self.graph.nodes[sm.anchor];
                (a.x - pose.x).hypot(a.y - pose.y) <= lc.search_radius
            })
            .map(|(k, _)| k)
            .collect()
    }

    /// Matches pending scans against candidate submaps. Each scan is loaded
    /// into the engine once and reused across its candidates.
    pub fn detect_loops(&mut self, report: &mut BackendReport) -> Result<Vec<Edge>, SlamError> {
        let mut edges = Vec::new();
        let pending = std::mem::take(&mut self.pending);
        let lc = self.cfg.loops;
        for node in pending {
            let cands = self.candidates(node);
            if cands.is_empty() || self.scans[node].is_empty() {
                continue;
            }
            report.loop_candidates += cands.len();
            let scan = &self.scans[node];
            let fixed = FixedScan::from_scan(scan);
            let mut loaded = false;
            for k in cands {
                let sm = &self.finished[k];
                let xi0 = relative(&self.graph.nodes[node], &self.graph.nodes[sm.anchor]);
                let window = lc.window.search_window(sm.grid.resolution(), scan);
                let result = self.engine.submit(MatchQuery {
                    map: Some(local_window(&sm.grid, &xi0)?),
                    scan: if loaded { None } else { Some(fixed.clone()) },
                    xi0,
                    window,
                })?;
                loaded = true;
                let normalized = result.normalized_score(scan.len());
                if normalized <= lc.score_threshold {
                    continue;
                }
                let mut local = result.pose;
                if self.cfg.refine {
                    let view = InterpolatedMapView::new(&sm.grid);
                    local = gauss_newton(&view, scan, &local, &GaussNewtonConfig::default()).pose;
                }
                let q = (normalized / 63.0).powi(2);
                let (sxy, st) = lc.base_sigma;
                let information = Matrix3::from_diagonal(&Vector3::new(q / (sxy * sxy), q / (sxy * sxy), q / (st * st)));
                self.loops.push(LoopClosure {
                    node,
                    submap: sm.id,
                    anchor: sm.anchor,
                    normalized_score: normalized,
                    delta: (local.x, local.y, local.theta),
                });
                report.loops.push(*self.loops.last().expect("just pushed"));
                edges.push(Edge {
                    i: sm.anchor,
                    j: node,
                    delta: local,
                    information,
                    kind: EdgeKind::Loop,
                });
            }
        }
        Ok(edges)
    }

    /// Loop detection and, when any loop is accepted, optimization.
    pub fn step(&mut self) -> Result<(Option<PoseSnapshot>, BackendReport), SlamError> {
        let mut report = BackendReport::default();
        let before = self.engine.stats().score_evals;
        let edges = self.detect_loops(&mut report)?;
        report.score_evals = self.engine.stats().score_evals - before;
        if edges.is_empty() {
            return Ok((None, report));
        }
        for e in edges {
            self.graph.add_edge(e)?;
        }
        report.chi2_before = self.graph.chi2();
        let opt = self.graph.optimize(&OptimizeConfig::default())?;
        report.chi2_after = *opt.chi2.last().expect("non-empty");
        report.optimized = true;
        for sm in &mut self.finished {
            sm.origin = self.graph.nodes[sm.anchor];
        }
        Ok((
            Some(PoseSnapshot {
                poses: self.graph.nodes.clone(),
            }),
            report,
        ))
    }

    /// Global map from every scan at its current pose.
    pub fn global_map(&self, model: &LogOddsModel) -> GridMap {
        let mut map = GridMap::centered((0.0, 0.0), 8.0, self.cfg.resolution);
        for (scan, pose) in self.scans.iter().zip(&self.graph.nodes) {
            map.update(scan, pose, model);
        }
        map
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GraphStepReport {
    pub frontend: FrontendReport,
    pub backend: BackendReport,
    pub timings: StepTimings,
}

/// Frontend and backend run in lockstep: each scan goes through the
/// frontend, its messages through the backend, and any optimized poses
/// back to the frontend before the next scan.
pub struct GraphSlam {
    pub frontend: Frontend,
    pub backend: Backend,
    model: LogOddsModel,
}

impl GraphSlam {
    pub fn new(cfg: GraphConfig) -> Self {
        Self::with_model(cfg, LogOddsModel::default())
    }

    pub fn with_model(cfg: GraphConfig, model: LogOddsModel) -> Self {
        Self {
            frontend: Frontend::new(cfg, model),
            backend: Backend::new(cfg),
            model,
        }
    }

    pub fn step(&mut self, scan: &Scan, odometry: &Pose2D) -> Result<GraphStepReport, SlamError> {
        let mut report = GraphStepReport::default();
        let (msgs, fr) = self.frontend.step(scan, odometry, &mut report.timings)?;
        report.frontend = fr;
        let t = Instant::now();
        for m in msgs {
            self.backend.receive(m)?;
        }
        let (snapshot, br) = self.backend.step()?;
        report.timings.backend_us = micros(t);
        report.backend = br;
        if let Some(s) = snapshot {
            self.frontend.apply(&s);
        }
        Ok(report)
    }

    pub fn trajectory(&self) -> &[Pose2D] {
        &self.backend.graph().nodes
    }

    pub fn global_map(&self) -> GridMap {
        self.backend.global_map(&self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::ScanPoint;

    fn box_scan(pose: &Pose2D) -> Scan {
        // 1 m-spaced posts at the corners of a 6 m square, plus walls
        let walls = [(-3.0, -3.0, 3.0, -3.0), (3.0, -3.0, 3.0, 3.0), (3.0, 3.0, -3.0, 3.0), (-3.0, 3.0, -3.0, -3.0), (0.5, 1.0, 1.5, 1.2)];
        let pts = (0..360)
            .filter_map(|k| {
                let a = -std::f64::consts::PI + k as f64 * std::f64::consts::TAU / 360.0;
                let (dx, dy) = ((a + pose.theta).cos(), (a + pose.theta).sin());
                let mut best = f64::INFINITY;
                for &(x1, y1, x2, y2) in &walls {
                    let (ex, ey) = (x2 - x1, y2 - y1);
                    let den = dx * ey - dy * ex;
                    if den.abs() < 1e-12 {
                        continue;
                    }
                    let (wx, wy) = (x1 - pose.x, y1 - pose.y);
                    let t = (wx * ey - wy * ex) / den;
                    let u = (wx * dy - wy * dx) / den;
                    if t > 0.0 && (0.0..=1.0).contains(&u) {
                        best = best.min(t);
                    }
                }
                best.is_finite().then(|| ScanPoint::new(best, a))
            })
            .collect();
        Scan::new(pts, 0.0)
    }

    #[test]
    fn first_scan_bookkeeping() {
        let mut g = GraphSlam::new(GraphConfig::default());
        g.step(&box_scan(&Pose2D::identity()), &Pose2D::identity()).unwrap();
        assert_eq!(g.trajectory(), &[Pose2D::identity()]);
        assert!(g.backend.graph().edges.is_empty());
        assert_eq!(g.frontend.active_submaps().count(), 1);
    }

    #[test]
    fn straight_line_edges_follow_motion() {
        let mut g = GraphSlam::new(GraphConfig::default());
        let mut truth = Vec::new();
        for k in 0..40 {
            let p = Pose2D::new(-1.0 + 0.05 * k as f64, 0.0, 0.0);
            let odo = if k == 0 { Pose2D::identity() } else { relative(&p, &truth[k - 1]) };
            truth.push(p);
            g.step(&box_scan(&p), &odo).unwrap();
        }
        let graph = g.backend.graph();
        assert_eq!(graph.nodes.len(), 40);
        assert_eq!(graph.edges.iter().filter(|e| e.kind == EdgeKind::Odometry).count(), 39);
        for e in &graph.edges {
            let gt = relative(&truth[e.j], &truth[e.i]);
            assert!((e.delta.x - gt.x).abs() < 0.05 && (e.delta.y - gt.y).abs() < 0.05, "{e:?}");
            assert!((e.delta.theta - gt.theta).abs() < 0.01);
        }
        assert!(g.backend.finished_submaps().len() >= 1);
    }

    #[test]
    fn no_finished_submaps_no_loops() {
        let mut b = Backend::new(GraphConfig::default());
        b.receive(ToBackend::Node {
            id: 0,
            pose: Pose2D::identity(),
            scan: box_scan(&Pose2D::identity()),
            edge: None,
        })
        .unwrap();
        let (snap, report) = b.step().unwrap();
        assert!(snap.is_none());
        assert!(report.loops.is_empty());
        assert_eq!(b.engine().stats().queries, 0);
    }
}
