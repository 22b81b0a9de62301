//! Hector SLAM: the multi-resolution Gauss-Newton original and the variant
//! seeded by a correlative match on the finest map.

use super::{local_window, micros, SlamError, StepTimings, WindowConfig};
use crate::csm::{Algorithm, CsmEngine, FixedScan, MatchQuery, MatchResult, ThetaPart};
use crate::grid::{GridMap, LogOddsModel, DEFAULT_RESOLUTION};
use crate::pose::{Pose2D, Scan};
use crate::refine::{cost, gauss_newton, GaussNewtonConfig, InterpolatedMapView};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Maps at resolutions `r, 2r, …, 2^{n−1} r` sharing one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPyramid {
    levels: Vec<GridMap>,
}

impl MapPyramid {
    pub fn new(levels: usize, resolution: f64, half_extent: f64) -> Self {
        let levels = (0..levels.max(1))
            .map(|k| GridMap::centered((0.0, 0.0), half_extent, resolution * (1u32 << k) as f64))
            .collect();
        Self { levels }
    }

    pub fn levels(&self) -> &[GridMap] {
        &self.levels
    }

    pub fn finest(&self) -> &GridMap {
        &self.levels[0]
    }

    pub fn update(&mut self, scan: &Scan, pose: &Pose2D, model: &LogOddsModel) {
        for m in &mut self.levels {
            m.update(scan, pose, model);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HectorConfig {
    pub resolution: f64,
    /// Pyramid depth of the original variant; the robust one always uses 1.
    pub levels: usize,
    pub window: WindowConfig,
    pub max_iters: usize,
    pub eps: f64,
}

impl Default for HectorConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            levels: 3,
            window: WindowConfig::default(),
            max_iters: 30,
            eps: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct HectorStepReport {
    pub csm_score: Option<u32>,
    /// `J` at the matcher's pose, when one was computed.
    pub seed_cost: Option<f64>,
    pub final_cost: f64,
    pub score_evals: u64,
    pub timings: StepTimings,
}

/// Queries the two halves of the angular range on two engines at once and
/// keeps the better result; on equal scores the half with the smaller
/// `n_θ` wins, which matches a single full-window search.
pub fn split_window_match(engines: &mut [CsmEngine; 2], query: MatchQuery) -> Result<MatchResult, SlamError> {
    if query.window.wtheta == 0 || query.window.theta_part != ThetaPart::Full {
        return Ok(engines[0].submit(query)?);
    }
    let lower = MatchQuery {
        window: query.window.with_theta_part(ThetaPart::Lower),
        ..query.clone()
    };
    let upper = MatchQuery {
        window: query.window.with_theta_part(ThetaPart::Upper),
        ..query
    };
    let [e0, e1] = engines;
    let (a, b) = std::thread::scope(|s| {
        let h = s.spawn(move || e1.submit(upper));
        let a = e0.submit(lower);
        (a, h.join().expect("matcher thread panicked"))
    });
    let (a, b) = (a?, b?);
    let evals = a.num_score_evals + b.num_score_evals;
    let mut best = if b.score > a.score { b } else { a };
    best.num_score_evals = evals;
    Ok(best)
}

pub struct HectorSlam {
    cfg: HectorConfig,
    model: LogOddsModel,
    robust: bool,
    maps: MapPyramid,
    pose: Pose2D,
    trajectory: Vec<Pose2D>,
    engines: [CsmEngine; 2],
}

impl HectorSlam {
    pub fn original(cfg: HectorConfig) -> Self {
        Self::build(cfg, false, LogOddsModel::default())
    }

    pub fn robust(cfg: HectorConfig) -> Self {
        Self::build(cfg, true, LogOddsModel::default())
    }

    pub fn build(cfg: HectorConfig, robust: bool, model: LogOddsModel) -> Self {
        let levels = if robust { 1 } else { cfg.levels };
        Self {
            cfg,
            model,
            robust,
            maps: MapPyramid::new(levels, cfg.resolution, 8.0),
            pose: Pose2D::identity(),
            trajectory: Vec::new(),
            engines: [CsmEngine::new(Algorithm::Optimized), CsmEngine::new(Algorithm::Optimized)],
        }
    }

    pub fn is_robust(&self) -> bool {
        self.robust
    }

    pub fn pose(&self) -> Pose2D {
        self.pose
    }

    pub fn trajectory(&self) -> &[Pose2D] {
        &self.trajectory
    }

    pub fn maps(&self) -> &MapPyramid {
        &self.maps
    }

    fn gn_config(&self) -> GaussNewtonConfig {
        GaussNewtonConfig {
            max_iters: self.cfg.max_iters,
            eps: self.cfg.eps,
            ..Default::default()
        }
    }

    pub fn step(&mut self, scan: &Scan) -> Result<HectorStepReport, SlamError> {
        let mut report = HectorStepReport::default();
        if self.trajectory.is_empty() || scan.is_empty() {
            report.final_cost = self.current_cost(scan, &self.pose);
        } else if self.robust {
            self.robust_estimate(scan, &mut report)?;
        } else {
            self.original_estimate(scan, &mut report);
        }
        let t = Instant::now();
        self.maps.update(scan, &self.pose, &self.model);
        report.timings.map_update_us = micros(t);
        self.trajectory.push(self.pose);
        Ok(report)
    }

    fn current_cost(&self, scan: &Scan, xi: &Pose2D) -> f64 {
        let pts: Vec<(f64, f64)> = scan.points.iter().map(|p| p.to_xy()).collect();
        cost(&InterpolatedMapView::new(self.maps.finest()), &pts, xi)
    }

    /// Coarse-to-fine Gauss-Newton, each level seeded by the one above.
    fn original_estimate(&mut self, scan: &Scan, report: &mut HectorStepReport) {
        let t = Instant::now();
        let gn = self.gn_config();
        let mut xi = self.pose;
        let mut last = 0.0;
        for level in self.maps.levels().iter().rev() {
            let out = gauss_newton(&InterpolatedMapView::new(level), scan, &xi, &gn);
            xi = out.pose;
            last = out.cost;
        }
        report.final_cost = last;
        report.timings.refinement_us = micros(t);
        self.pose = xi;
    }

    fn robust_estimate(&mut self, scan: &Scan, report: &mut HectorStepReport) -> Result<(), SlamError> {
        let t = Instant::now();
        let fine = self.maps.finest();
        let window = self.cfg.window.search_window(fine.resolution(), scan);
        let query = MatchQuery {
            map: Some(local_window(fine, &self.pose)?),
            scan: Some(FixedScan::from_scan(scan)),
            xi0: self.pose,
            window,
        };
        let m = split_window_match(&mut self.engines, query)?;
        report.timings.matching_us = micros(t);
        report.csm_score = Some(m.score);
        report.score_evals = m.num_score_evals;
        let t = Instant::now();
        let view = InterpolatedMapView::new(fine);
        let out = gauss_newton(&view, scan, &m.pose, &self.gn_config());
        report.seed_cost = out.accepted_costs.first().copied();
        report.final_cost = out.cost;
        report.timings.refinement_us = micros(t);
        self.pose = out.pose;
        Ok(())
    }
}
