//! Runs a SLAM method over a parsed log and collects the trajectory, the
//! final map and a JSON line per step.

use crate::eval::Trajectory;
use crate::grid::{GridMap, LogOddsModel};
use crate::io::carmen::{CarmenConfig, EntryKind, LogEntry};
use crate::pose::{preprocess_scan, relative, Pose2D, PreprocessConfig, Scan};
use crate::slam::graph::{GraphConfig, GraphSlam};
use crate::slam::hector::{HectorConfig, HectorSlam};
use crate::slam::pf::{PfConfig, ParticleFilter};
use crate::slam::SlamError;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Instant;
use thiserror::Error;

/// Everything a run can be configured with; every section is optional in
/// the TOML file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub model: LogOddsModel,
    pub carmen: CarmenConfig,
    pub pf: PfConfig,
    pub graph: GraphConfig,
    pub hector: HectorConfig,
}

#[derive(Debug, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(#[from] toml::de::Error);

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ParticleFilter,
    Graph,
    Hector { robust: bool },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ParticleFilter => "pf",
            Method::Graph => "graph",
            Method::Hector { robust: false } => "hector",
            Method::Hector { robust: true } => "hector-robust",
        }
    }
}

/// A preprocessed scan with the odometry motion since the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserStep {
    pub timestamp: f64,
    pub scan: Scan,
    pub odometry: Pose2D,
}

/// Laser entries in log order. The first step carries no motion.
pub fn laser_steps(entries: &[LogEntry], cfg: &PreprocessConfig) -> Vec<LaserStep> {
    let mut prev: Option<Pose2D> = None;
    entries
        .iter()
        .filter(|e| e.kind == EntryKind::Laser)
        .map(|e| {
            let odometry = prev.map_or(Pose2D::identity(), |p| relative(&e.odom_pose, &p));
            prev = Some(e.odom_pose);
            LaserStep {
                timestamp: e.timestamp,
                scan: preprocess_scan(&e.scan, cfg),
                odometry,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub map: GridMap,
    /// One JSON object per step.
    pub step_log: Vec<String>,
    pub elapsed_s: f64,
}

pub fn run(method: Method, steps: &[LaserStep], cfg: &RunConfig) -> Result<RunOutput, SlamError> {
    let start = Instant::now();
    let mut step_log = Vec::with_capacity(steps.len());
    let stamps = steps.iter().map(|s| s.timestamp);
    let (poses, map) = match method {
        Method::ParticleFilter => {
            let mut pf = ParticleFilter::with_model(cfg.pf, cfg.model);
            for (k, s) in steps.iter().enumerate() {
                let r = pf.step(&s.scan, &s.odometry)?;
                step_log.push(json!({"step": k, "t": s.timestamp, "method": "pf", "report": r}).to_string());
            }
            let best = pf.best_particle();
            (best.trajectory[1..].to_vec(), best.map.clone())
        }
        Method::Graph => {
            let mut g = GraphSlam::with_model(cfg.graph, cfg.model);
            for (k, s) in steps.iter().enumerate() {
                let r = g.step(&s.scan, &s.odometry)?;
                step_log.push(json!({"step": k, "t": s.timestamp, "method": "graph", "report": r}).to_string());
            }
            (g.trajectory().to_vec(), g.global_map())
        }
        Method::Hector { robust } => {
            let mut h = HectorSlam::build(cfg.hector, robust, cfg.model);
            for (k, s) in steps.iter().enumerate() {
                let r = h.step(&s.scan)?;
                step_log.push(json!({"step": k, "t": s.timestamp, "method": method.name(), "report": r}).to_string());
            }
            (h.trajectory().to_vec(), h.maps().finest().clone())
        }
    };
    Ok(RunOutput {
        trajectory: stamps.zip(poses).collect(),
        map,
        step_log,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::sim::{jump_corridor, simulate};

    #[test]
    fn config_sections_are_optional() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
        let c = RunConfig::from_toml("[pf]\nnum_particles = 4\n[graph.loops]\nenabled = false\n").unwrap();
        assert_eq!(c.pf.num_particles, 4);
        assert!(!c.graph.loops.enabled);
        assert!(RunConfig::from_toml("[pf]\nparticles = 4\n").is_err());
    }

    #[test]
    fn odometry_deltas_between_laser_entries() {
        let out = simulate(&jump_corridor(), 1);
        let steps = laser_steps(&out.log, &PreprocessConfig::default());
        assert_eq!(steps.len(), out.log.len());
        assert_eq!(steps[0].odometry, Pose2D::identity());
        assert!((steps[1].odometry.x - 0.5).abs() < 1e-9);
        assert!(steps[1].scan.points.iter().all(|p| p.range >= 0.1));
    }

    #[test]
    fn trajectory_has_one_pose_per_scan() {
        let out = simulate(&jump_corridor(), 1);
        let steps = laser_steps(&out.log[..5], &PreprocessConfig::default());
        for m in [Method::ParticleFilter, Method::Graph, Method::Hector { robust: true }] {
            let mut cfg = RunConfig::default();
            cfg.pf.num_particles = 2;
            let r = run(m, &steps, &cfg).unwrap();
            assert_eq!(r.trajectory.len(), 5, "{}", m.name());
            assert_eq!(r.step_log.len(), 5);
        }
    }
}
