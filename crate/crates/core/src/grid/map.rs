use std::io::{self, Write};

use crate::pose::{CellIndex, Pose2D, Scan};
use serde::{Deserialize, Serialize};

pub const DEFAULT_RESOLUTION: f64 = 0.05;

/// Cells added on each side whenever the map has to grow.
const GROW_MARGIN: i32 = 32;

/// Additive binary Bayes filter parameters, in log-odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogOddsModel {
    pub hit: f32,
    pub miss: f32,
    pub min: f32,
    pub max: f32,
}

impl Default for LogOddsModel {
    fn default() -> Self {
        Self {
            hit: 0.85,
            miss: -0.4,
            min: -10.0,
            max: 10.0,
        }
    }
}

/// Log-odds occupancy grid. Cell (0, 0) has its lower-left corner at
/// `origin`; rows are indexed by `j` (y), columns by `i` (x).
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    log_odds: Vec<f32>,
    updates: u64,
}

impl GridMap {
    pub fn new(width: usize, height: usize, resolution: f64, origin: (f64, f64)) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self {
            width,
            height,
            resolution,
            origin,
            log_odds: vec![0.0; width * height],
            updates: 0,
        }
    }

    /// Map covering the axis-aligned square of half-size `half_extent`
    /// meters around `center`.
    pub fn centered(center: (f64, f64), half_extent: f64, resolution: f64) -> Self {
        let n = (2.0 * half_extent / resolution).ceil() as usize;
        Self::new(n, n, resolution, (center.0 - half_extent, center.1 - half_extent))
    }

    /// Builds a map from explicit per-cell probabilities (row-major, row 0 = lowest y).
    pub fn from_probabilities(
        width: usize,
        height: usize,
        resolution: f64,
        origin: (f64, f64),
        probs: &[f64],
    ) -> Self {
        assert_eq!(probs.len(), width * height);
        let mut m = Self::new(width, height, resolution, origin);
        for (l, &p) in m.log_odds.iter_mut().zip(probs) {
            *l = prob_to_log_odds(p);
        }
        m.updates = 1;
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn resolution(&self) -> f64 {
        self.resolution
    }
    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }
    /// Number of scans integrated so far.
    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn in_bounds(&self, c: CellIndex) -> bool {
        c.i >= 0 && c.j >= 0 && (c.i as usize) < self.width && (c.j as usize) < self.height
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> CellIndex {
        CellIndex::new(
            ((x - self.origin.0) / self.resolution).floor() as i32,
            ((y - self.origin.1) / self.resolution).floor() as i32,
        )
    }

    pub fn cell_center(&self, c: CellIndex) -> (f64, f64) {
        (
            self.origin.0 + (c.i as f64 + 0.5) * self.resolution,
            self.origin.1 + (c.j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn log_odds(&self, c: CellIndex) -> Option<f32> {
        self.in_bounds(c).then(|| self.log_odds[c.j as usize * self.width + c.i as usize])
    }

    /// Occupancy probability; cells outside the map read as unknown (0.5).
    pub fn probability(&self, c: CellIndex) -> f64 {
        self.log_odds(c).map_or(0.5, log_odds_to_prob)
    }

    pub fn set_probability(&mut self, c: CellIndex, p: f64) {
        assert!(self.in_bounds(c));
        self.log_odds[c.j as usize * self.width + c.i as usize] = prob_to_log_odds(p);
    }

    /// Raw log-odds buffer, row-major.
    pub fn cells(&self) -> &[f32] {
        &self.log_odds
    }

    /// Grows the map so that `c` is in bounds. Returns the shift applied to
    /// existing indices.
    fn ensure_contains(&mut self, lo: CellIndex, hi: CellIndex) -> (i32, i32) {
        let grow_lo_i = if lo.i < 0 { -lo.i + GROW_MARGIN } else { 0 };
        let grow_lo_j = if lo.j < 0 { -lo.j + GROW_MARGIN } else { 0 };
        let grow_hi_i = if hi.i >= self.width as i32 { hi.i - self.width as i32 + 1 + GROW_MARGIN } else { 0 };
        let grow_hi_j = if hi.j >= self.height as i32 { hi.j - self.height as i32 + 1 + GROW_MARGIN } else { 0 };
        if grow_lo_i == 0 && grow_lo_j == 0 && grow_hi_i == 0 && grow_hi_j == 0 {
            return (0, 0);
        }
        let new_w = self.width + (grow_lo_i + grow_hi_i) as usize;
        let new_h = self.height + (grow_lo_j + grow_hi_j) as usize;
        let mut cells = vec![0.0f32; new_w * new_h];
        for j in 0..self.height {
            let dst = (j + grow_lo_j as usize) * new_w + grow_lo_i as usize;
            cells[dst..dst + self.width].copy_from_slice(&self.log_odds[j * self.width..(j + 1) * self.width]);
        }
        self.log_odds = cells;
        self.width = new_w;
        self.height = new_h;
        self.origin.0 -= grow_lo_i as f64 * self.resolution;
        self.origin.1 -= grow_lo_j as f64 * self.resolution;
        (grow_lo_i, grow_lo_j)
    }

    /// Integrates a posed scan: the endpoint cell of each beam gets the hit
    /// increment, cells from the sensor cell up to (excluding) the endpoint
    /// get the miss increment. Values are clamped to the model limits. The
    /// map grows when a beam leaves the current bounds.
    pub fn update(&mut self, scan: &Scan, pose: &Pose2D, model: &LogOddsModel) {
        if scan.is_empty() {
            return;
        }
        let endpoints: Vec<(f64, f64)> = scan
            .points
            .iter()
            .map(|p| {
                let (px, py) = p.to_xy();
                pose.transform_point(px, py)
            })
            .collect();
        let mut sensor = self.world_to_cell(pose.x, pose.y);
        let mut cells: Vec<CellIndex> = endpoints.iter().map(|&(x, y)| self.world_to_cell(x, y)).collect();
        let lo = cells.iter().fold(sensor, |a, c| CellIndex::new(a.i.min(c.i), a.j.min(c.j)));
        let hi = cells.iter().fold(sensor, |a, c| CellIndex::new(a.i.max(c.i), a.j.max(c.j)));
        let (si, sj) = self.ensure_contains(lo, hi);
        if si != 0 || sj != 0 {
            sensor = CellIndex::new(sensor.i + si, sensor.j + sj);
            for c in &mut cells {
                c.i += si;
                c.j += sj;
            }
        }
        let w = self.width;
        for end in &cells {
            trace_ray(sensor, *end, |c| {
                let v = &mut self.log_odds[c.j as usize * w + c.i as usize];
                *v = (*v + model.miss).clamp(model.min, model.max);
            });
        }
        for end in &cells {
            let v = &mut self.log_odds[end.j as usize * w + end.i as usize];
            *v = (*v + model.hit).clamp(model.min, model.max);
        }
        self.updates += 1;
    }

    /// Binary PGM with gray = ⌊255·(1 − p)⌋; the top image row is the
    /// highest `j`.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let mut row = Vec::with_capacity(self.width);
        for j in (0..self.height).rev() {
            row.clear();
            row.extend(
                self.log_odds[j * self.width..(j + 1) * self.width]
                    .iter()
                    .map(|&l| (255.0 * (1.0 - log_odds_to_prob(l))).floor() as u8),
            );
            out.write_all(&row)?;
        }
        Ok(())
    }
}

pub(crate) fn log_odds_to_prob(l: f32) -> f64 {
    if l == 0.0 {
        return 0.5;
    }
    1.0 / (1.0 + (-(l as f64)).exp())
}

fn prob_to_log_odds(p: f64) -> f32 {
    let p = p.clamp(0.0, 1.0);
    if p == 0.5 {
        0.0
    } else if p <= 0.0 {
        f32::MIN
    } else if p >= 1.0 {
        f32::MAX
    } else {
        (p / (1.0 - p)).ln() as f32
    }
}

/// Visits every cell on the integer line from `from` to `to`, including
/// `from` and excluding `to`.
pub(crate) fn trace_ray(from: CellIndex, to: CellIndex, mut visit: impl FnMut(CellIndex)) {
    let dx = (to.i - from.i).abs();
    let dy = -(to.j - from.j).abs();
    let sx = if from.i < to.i { 1 } else { -1 };
    let sy = if from.j < to.j { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut i, mut j) = (from.i, from.j);
    while i != to.i || j != to.j {
        visit(CellIndex::new(i, j));
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            i += sx;
        }
        if e2 <= dx {
            err += dx;
            j += sy;
        }
    }
}
