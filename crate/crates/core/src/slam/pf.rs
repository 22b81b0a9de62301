//! Particle-filter SLAM. Each particle carries its own map and trajectory;
//! the proposal is the matcher's best pose around the odometry prediction.

use super::{local_window, micros, mix_seed, SlamError, StepTimings, WindowConfig};
use crate::csm::{Algorithm, CsmEngine, FixedScan, MatchQuery};
use crate::grid::{GridMap, LogOddsModel, DEFAULT_RESOLUTION};
use crate::pose::{Pose2D, Scan};
use crate::refine::{hill_climb, interpolated_score, HillClimbConfig, InterpolatedMapView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfConfig {
    pub num_particles: usize,
    /// Resample when `N_eff` drops below this fraction of the particle count.
    pub resample_threshold: f64,
    /// `σ_w` in `exp(s* / (σ_w·N))`.
    pub weight_temperature: f64,
    pub window: WindowConfig,
    /// Standard deviations of the per-step noise on `(Δx, Δy, Δθ)`.
    pub motion_noise: (f64, f64, f64),
    pub resolution: f64,
    pub refine: bool,
    pub seed: u64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            num_particles: 16,
            resample_threshold: 0.5,
            weight_temperature: 8.0,
            window: WindowConfig::default(),
            motion_noise: (0.02, 0.02, 0.01),
            resolution: DEFAULT_RESOLUTION,
            refine: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub pose: Pose2D,
    pub map: GridMap,
    pub trajectory: Vec<Pose2D>,
    pub weight: f64,
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PfStepReport {
    pub scores: Vec<u32>,
    pub n_eff: f64,
    pub resampled: bool,
    pub all_zero_scores: bool,
    pub scan_loads: u64,
    pub map_loads: u64,
    pub score_evals: u64,
    pub timings: StepTimings,
}

/// `1 / Σ w_i²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    if s > 0.0 {
        1.0 / s
    } else {
        0.0
    }
}

/// Low-variance resampling with the single draw `u ∈ [0, 1/P)`.
pub fn resample_systematic_with(weights: &[f64], u: f64) -> Vec<usize> {
    let p = weights.len();
    let mut out = Vec::with_capacity(p);
    if p == 0 {
        return out;
    }
    let step = 1.0 / p as f64;
    let mut cumulative = weights[0];
    let mut i = 0;
    for m in 0..p {
        let target = u + m as f64 * step;
        while target > cumulative && i + 1 < p {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}

pub fn resample_systematic(weights: &[f64], rng: &mut impl Rng) -> Vec<usize> {
    let u = rng.random::<f64>() / weights.len().max(1) as f64;
    resample_systematic_with(weights, u)
}

pub struct ParticleFilter {
    cfg: PfConfig,
    model: LogOddsModel,
    particles: Vec<Particle>,
    engines: [CsmEngine; 2],
    steps: u64,
}

impl ParticleFilter {
    pub fn new(cfg: PfConfig) -> Self {
        Self::with_model(cfg, LogOddsModel::default())
    }

    pub fn with_model(cfg: PfConfig, model: LogOddsModel) -> Self {
        let p = cfg.num_particles.max(1);
        let particle = Particle {
            pose: Pose2D::identity(),
            map: GridMap::centered((0.0, 0.0), 8.0, cfg.resolution),
            trajectory: vec![Pose2D::identity()],
            weight: 1.0 / p as f64,
        };
        Self {
            cfg,
            model,
            particles: vec![particle; p],
            engines: [CsmEngine::new(Algorithm::Optimized), CsmEngine::new(Algorithm::Optimized)],
            steps: 0,
        }
    }

    pub fn config(&self) -> &PfConfig {
        &self.cfg
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Highest-weight particle, lowest index on ties.
    pub fn best_particle(&self) -> &Particle {
        best_of(&self.particles)
    }

    pub fn step(&mut self, scan: &Scan, odometry: &Pose2D) -> Result<PfStepReport, SlamError> {
        let mut report = PfStepReport::default();
        let before = [self.engines[0].stats(), self.engines[1].stats()];
        let t = Instant::now();
        let half = self.particles.len().div_ceil(2);
        let fixed = FixedScan::from_scan(scan);
        let cfg = self.cfg;
        let step = self.steps;
        let mut scores = vec![0u32; self.particles.len()];
        let mut refine_us = 0;
        {
            let (left, right) = self.particles.split_at_mut(half);
            let (sl, sr) = scores.split_at_mut(half);
            let [e0, e1] = &mut self.engines;
            let groups = [(left, sl, e0, 0usize), (right, sr, e1, half)];
            let results: Vec<Result<u64, SlamError>> = std::thread::scope(|s| {
                let handles: Vec<_> = groups
                    .into_iter()
                    .map(|(ps, ss, engine, offset)| {
                        let fixed = &fixed;
                        s.spawn(move || propose_group(ps, ss, engine, offset, scan, fixed, odometry, &cfg, step))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("particle group panicked")).collect()
            });
            for r in results {
                refine_us += r?;
            }
        }
        report.timings.matching_us = micros(t).saturating_sub(refine_us);
        report.timings.refinement_us = refine_us;

        let n = scan.len().max(1) as f64;
        report.all_zero_scores = scores.iter().all(|&s| s == 0);
        if report.all_zero_scores {
            let u = 1.0 / self.particles.len() as f64;
            self.particles.iter_mut().for_each(|p| p.weight = u);
        } else {
            let logw: Vec<f64> = self
                .particles
                .iter()
                .zip(&scores)
                .map(|(p, &s)| p.weight.max(f64::MIN_POSITIVE).ln() + s as f64 / (cfg.weight_temperature * n))
                .collect();
            let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = raw.iter().sum();
            for (p, r) in self.particles.iter_mut().zip(raw) {
                p.weight = r / total;
            }
        }
        let weights = self.weights();
        report.n_eff = effective_sample_size(&weights);
        if report.n_eff < cfg.resample_threshold * self.particles.len() as f64 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, step, u64::MAX]));
            let parents = resample_systematic(&weights, &mut rng);
            let u = 1.0 / parents.len() as f64;
            self.particles = parents
                .iter()
                .map(|&k| Particle {
                    weight: u,
                    ..self.particles[k].clone()
                })
                .collect();
            report.resampled = true;
        }

        let t = Instant::now();
        for p in &mut self.particles {
            p.map.update(scan, &p.pose, &self.model);
            p.trajectory.push(p.pose);
        }
        report.timings.map_update_us = micros(t);
        report.scores = scores;
        let after = [self.engines[0].stats(), self.engines[1].stats()];
        for k in 0..2 {
            report.scan_loads += after[k].scan_loads - before[k].scan_loads;
            report.map_loads += after[k].map_loads - before[k].map_loads;
            report.score_evals += after[k].score_evals - before[k].score_evals;
        }
        self.steps += 1;
        Ok(report)
    }
}

fn best_of(particles: &[Particle]) -> &Particle {
    let mut best = &particles[0];
    for p in &particles[1..] {
        if p.weight > best.weight {
            best = p;
        }
    }
    best
}

/// Proposal for one group of particles served by one engine. The scan is
/// loaded by the first match and reused for the rest. Returns the time
/// spent refining.
#[allow(clippy::too_many_arguments)]
fn propose_group(
    particles: &mut [Particle],
    scores: &mut [u32],
    engine: &mut CsmEngine,
    offset: usize,
    scan: &Scan,
    fixed: &FixedScan,
    odometry: &Pose2D,
    cfg: &PfConfig,
    step: u64,
) -> Result<u64, SlamError> {
    let mut scan_loaded = false;
    let mut refine_us = 0;
    let points: Vec<(f64, f64)> = scan.points.iter().map(|p| p.to_xy()).collect();
    for (k, (p, score)) in particles.iter_mut().zip(scores.iter_mut()).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, step, (offset + k) as u64]));
        let noise = Pose2D::new(
            sample(&mut rng, cfg.motion_noise.0),
            sample(&mut rng, cfg.motion_noise.1),
            sample(&mut rng, cfg.motion_noise.2),
        );
        let predicted = p.pose.compose(&odometry.compose(&noise));
        if p.map.update_count() == 0 || scan.is_empty() {
            p.pose = predicted;
            continue;
        }
        let window = cfg.window.search_window(p.map.resolution(), scan);
        let query = MatchQuery {
            map: Some(local_window(&p.map, &predicted)?),
            scan: if scan_loaded { None } else { Some(fixed.clone()) },
            xi0: predicted,
            window,
        };
        let result = engine.submit(query)?;
        scan_loaded = true;
        *score = result.score;
        p.pose = result.pose;
        if cfg.refine {
            let t = Instant::now();
            let view = InterpolatedMapView::new(&p.map);
            let hc = HillClimbConfig::for_steps(window.r, window.dtheta);
            p.pose = hill_climb(|xi| interpolated_score(&view, &points, xi), &p.pose, &hc).pose;
            refine_us += micros(t);
        }
    }
    Ok(refine_us)
}

fn sample(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
    } else {
        0.0
    }
}
