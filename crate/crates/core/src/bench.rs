//! The standard throughput query and a timing harness comparing the
//! pruned matcher against the exhaustive one.

use crate::csm::{match_optimized, match_oracle, CsmError, FixedScan, PreparedMap, SearchWindow, HARDWARE_BLOCK};
use crate::grid::{GridMap, LogOddsModel, QuantizedMap, DEFAULT_RESOLUTION, MAX_MAP_CELLS_PER_SIDE};
use crate::io::sim::loop_corridor;
use crate::pose::{Pose2D, Scan};
use crate::slam::WindowConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct StandardQuery {
    pub map: QuantizedMap,
    pub scan: FixedScan,
    pub xi0: Pose2D,
    pub window: SearchWindow,
}

/// A 320×320 map of the loop corridor built from ten scans around a
/// seeded pose, a 360-point scan from that pose and a 0.25 m / 0.25 rad
/// window around a perturbed initial guess.
pub fn standard_query(seed: u64) -> StandardQuery {
    let mut world = loop_corridor();
    // a long enough beam that every one of the 360 readings returns
    world.lidar.max_range = 20.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(10..world.trajectory.len() - 10);
    let truth = world.trajectory[k];
    let mut grid = GridMap::centered((truth.x, truth.y), 8.0, DEFAULT_RESOLUTION);
    let model = LogOddsModel::default();
    for pose in &world.trajectory[k - 5..k + 5] {
        grid.update(&world.scan_at(pose, 0.0, &mut rng), pose, &model);
    }
    let scan: Scan = world.scan_at(&truth, 0.0, &mut rng);
    let map = grid
        .quantize((truth.x, truth.y), MAX_MAP_CELLS_PER_SIDE, MAX_MAP_CELLS_PER_SIDE)
        .expect("fixed crop size");
    let xi0 = truth.compose(&Pose2D::new(
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.1..0.1),
    ));
    let window = WindowConfig::new(0.25, 0.25, 0.25).search_window(DEFAULT_RESOLUTION, &scan);
    debug_assert_eq!(window.w, HARDWARE_BLOCK);
    StandardQuery {
        map,
        scan: FixedScan::from_scan(&scan),
        xi0,
        window,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub runs: usize,
    pub optimized_median_s: f64,
    pub oracle_median_s: f64,
    pub speedup: f64,
    /// Coarse map construction, which a loaded map pays once.
    pub prepare_median_s: f64,
    /// Both matchers returned the same score and steps on every run.
    pub agree: bool,
    pub candidates: u64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall time of `runs` calls of each matcher on `q`. Building the
/// coarse maps happens at map load and is timed separately.
pub fn bench(q: &StandardQuery, runs: usize) -> Result<BenchReport, CsmError> {
    let runs = runs.max(1);
    let mut fast = Vec::with_capacity(runs);
    let mut slow = Vec::with_capacity(runs);
    let mut prep = Vec::with_capacity(runs);
    let mut agree = true;
    for _ in 0..runs {
        let map = q.map.clone();
        let t = Instant::now();
        let prepared = PreparedMap::new(map, q.window.w)?;
        prep.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let a = match_optimized(&prepared, &q.scan, &q.xi0, &q.window)?;
        fast.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let b = match_oracle(&q.map, &q.scan, &q.xi0, &q.window)?;
        slow.push(t.elapsed().as_secs_f64());
        agree &= (a.score, a.best_steps) == (b.score, b.best_steps);
    }
    let (f, s) = (median(fast), median(slow));
    Ok(BenchReport {
        runs,
        optimized_median_s: f,
        oracle_median_s: s,
        speedup: s / f.max(f64::MIN_POSITIVE),
        prepare_median_s: median(prep),
        agree,
        candidates: q.window.candidate_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_query_shape() {
        let q = standard_query(1);
        assert_eq!((q.map.width(), q.map.height()), (320, 320));
        assert_eq!(q.scan.len(), 360);
        assert_eq!(q.window.w, 8);
        assert!(q.window.validate().is_ok());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
