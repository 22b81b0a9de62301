//! SLAM pipelines built on the matcher: particle filter, graph SLAM with
//! loop closure, and both Hector variants.

pub mod graph;
pub mod hector;
pub mod pf;
pub mod posegraph;
mod sparse;

use crate::csm::{default_angular_step, CsmError, SearchWindow, HARDWARE_BLOCK};
use crate::grid::{GridError, GridMap, QuantizedMap, MAX_MAP_CELLS_PER_SIDE};
use crate::pose::{Pose2D, Scan};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SlamError {
    #[error(transparent)]
    Csm(#[from] CsmError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Optimize(#[from] posegraph::OptimizeError),
}

/// Metric half-extents of a search window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub half_x: f64,
    pub half_y: f64,
    pub half_theta: f64,
    /// Angular step; `None` uses resolution over the scan's maximum range.
    pub dtheta: Option<f64>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self::new(0.25, 0.25, 0.25)
    }
}

impl WindowConfig {
    pub const fn new(half_x: f64, half_y: f64, half_theta: f64) -> Self {
        Self {
            half_x,
            half_y,
            half_theta,
            dtheta: None,
        }
    }

    pub fn search_window(&self, resolution: f64, scan: &Scan) -> SearchWindow {
        let dtheta = self
            .dtheta
            .unwrap_or_else(|| default_angular_step(resolution, scan.max_range()));
        SearchWindow::from_metric(self.half_x, self.half_y, self.half_theta, resolution, dtheta, HARDWARE_BLOCK)
    }
}

/// The matcher's view of `map` around `center`: the largest crop the
/// buffer holds, limited to the map's own size.
pub fn local_window(map: &GridMap, center: &Pose2D) -> Result<QuantizedMap, GridError> {
    let w = map.width().clamp(1, MAX_MAP_CELLS_PER_SIDE);
    let h = map.height().clamp(1, MAX_MAP_CELLS_PER_SIDE);
    map.quantize((center.x, center.y), w, h)
}

/// Splitmix64 finalizer, for deriving independent seeds.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// Wall-clock split of one pipeline step, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepTimings {
    pub matching_us: u64,
    pub refinement_us: u64,
    pub map_update_us: u64,
    pub backend_us: u64,
}

pub(crate) fn micros(t: std::time::Instant) -> u64 {
    t.elapsed().as_micros() as u64
}
