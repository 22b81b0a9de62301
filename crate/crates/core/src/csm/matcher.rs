//! The three matchers. All of them report the first maximum in the order
//! `n_θ`, then coarse row block, coarse column block, then `n_y`, `n_x`
//! inside the block, so their results agree exactly.

use super::discretize::{discretize_into, score_coarse, score_fine, DiscretizedScan, FixedScan, MapGeometry};
use super::window::{Block, MatchResult, SearchWindow, HARDWARE_BLOCK};
use super::CsmError;
use crate::grid::{build_coarse, CoarseLayout, CoarseMap, QuantizedMap};
use crate::pose::Pose2D;

/// Upper limit on candidates the oracle agrees to enumerate.
pub const ORACLE_CANDIDATE_LIMIT: u64 = 10_000_000;

/// Lanes evaluated together by the parallel coarse stage.
const UNROLL: usize = 8;

/// Fine map plus its coarse map in both layouts.
#[derive(Debug, Clone)]
pub struct PreparedMap {
    pub fine: QuantizedMap,
    pub coarse: CoarseMap,
    pub coarse_rearranged: CoarseMap,
}

impl PreparedMap {
    pub fn new(fine: QuantizedMap, w: u32) -> Result<Self, CsmError> {
        let coarse = build_coarse(&fine, w as usize)?;
        let coarse_rearranged = coarse.rearrange()?;
        Ok(Self {
            fine,
            coarse,
            coarse_rearranged,
        })
    }

    pub fn block(&self) -> u32 {
        self.coarse.block() as u32
    }
}

/// A coarse candidate as seen by the reference matcher.
#[derive(Debug)]
pub struct CoarseVisit<'a> {
    pub ntheta: i32,
    pub x_block: Block,
    pub y_block: Block,
    pub coarse_score: u32,
    /// Whether the block was skipped because `s′ ≤ s*`.
    pub pruned: bool,
    pub indices: &'a DiscretizedScan,
}

#[derive(Debug, Clone, Copy)]
struct Best {
    score: i64,
    steps: (i32, i32, i32),
}

impl Best {
    fn new(window: &SearchWindow) -> Self {
        let nt = window.theta_steps().start;
        let nx = window.x_blocks()[0].start;
        let ny = window.y_blocks()[0].start;
        Best {
            score: -1,
            steps: (nx, ny, nt),
        }
    }

    #[inline]
    fn offer(&mut self, score: u32, steps: (i32, i32, i32)) {
        if score as i64 > self.score {
            self.score = score as i64;
            self.steps = steps;
        }
    }

    fn finish(self, xi0: &Pose2D, window: &SearchWindow, evals: u64) -> MatchResult {
        MatchResult {
            pose: window.candidate_pose(xi0, self.steps),
            score: self.score.max(0) as u32,
            best_steps: self.steps,
            num_score_evals: evals,
        }
    }
}

fn check_inputs(scan: &FixedScan, window: &SearchWindow) -> Result<(), CsmError> {
    window.validate()?;
    if scan.is_empty() {
        return Err(CsmError::EmptyScan);
    }
    if scan.len() > crate::pose::MAX_SCAN_POINTS {
        return Err(CsmError::ScanTooLong(scan.len()));
    }
    Ok(())
}

fn check_block(map: &PreparedMap, window: &SearchWindow) -> Result<(), CsmError> {
    if map.block() != window.w {
        return Err(CsmError::BlockMismatch {
            map: map.block(),
            window: window.w,
        });
    }
    Ok(())
}

/// Coarse-to-fine search with pruning, one candidate at a time.
pub fn match_reference(
    map: &PreparedMap,
    scan: &FixedScan,
    xi0: &Pose2D,
    window: &SearchWindow,
) -> Result<MatchResult, CsmError> {
    match_reference_observed(map, scan, xi0, window, |_| {})
}

/// [`match_reference`] reporting every coarse candidate it evaluates.
pub fn match_reference_observed(
    map: &PreparedMap,
    scan: &FixedScan,
    xi0: &Pose2D,
    window: &SearchWindow,
    mut observer: impl FnMut(&CoarseVisit<'_>),
) -> Result<MatchResult, CsmError> {
    check_inputs(scan, window)?;
    check_block(map, window)?;
    let geometry = MapGeometry::of(&map.fine);
    let x_blocks = window.x_blocks();
    let y_blocks = window.y_blocks();
    let mut best = Best::new(window);
    let mut evals = 0u64;
    let mut idx = DiscretizedScan::default();
    for nt in window.theta_steps() {
        discretize_into(scan, &window.rotated_center(xi0, nt), &geometry, &mut idx);
        for yb in &y_blocks {
            for xb in &x_blocks {
                let s_coarse = score_coarse(&map.coarse, &idx, xb.start, yb.start);
                evals += 1;
                let pruned = s_coarse as i64 <= best.score;
                observer(&CoarseVisit {
                    ntheta: nt,
                    x_block: *xb,
                    y_block: *yb,
                    coarse_score: s_coarse,
                    pruned,
                    indices: &idx,
                });
                if pruned {
                    continue;
                }
                for ny in yb.start..yb.start + yb.extent as i32 {
                    for nx in xb.start..xb.start + xb.extent as i32 {
                        let s = score_fine(&map.fine, &idx, nx, ny);
                        evals += 1;
                        best.offer(s, (nx, ny, nt));
                    }
                }
            }
        }
    }
    Ok(best.finish(xi0, window, evals))
}

/// Exhaustive evaluation of every candidate on the fine map, no coarse map,
/// no pruning.
pub fn match_oracle(
    map: &QuantizedMap,
    scan: &FixedScan,
    xi0: &Pose2D,
    window: &SearchWindow,
) -> Result<MatchResult, CsmError> {
    check_inputs(scan, window)?;
    if window.candidate_count() > ORACLE_CANDIDATE_LIMIT {
        return Err(CsmError::WindowTooLarge(format!(
            "{} candidates exceed the oracle limit of {ORACLE_CANDIDATE_LIMIT}",
            window.candidate_count()
        )));
    }
    let geometry = MapGeometry::of(map);
    let mut best = Best::new(window);
    let mut evals = 0u64;
    let mut idx = DiscretizedScan::default();
    for nt in window.theta_steps() {
        discretize_into(scan, &window.rotated_center(xi0, nt), &geometry, &mut idx);
        for yb in window.y_blocks() {
            for xb in window.x_blocks() {
                for ny in yb.start..yb.start + yb.extent as i32 {
                    for nx in xb.start..xb.start + xb.extent as i32 {
                        best.offer(score_fine(map, &idx, nx, ny), (nx, ny, nt));
                        evals += 1;
                    }
                }
            }
        }
    }
    Ok(best.finish(xi0, window, evals))
}

/// Hardware-structured search: eight coarse blocks along x are scored per
/// pass from the rearranged coarse map, and the fine stage accumulates a
/// `w × 2` array of scores for two rows of candidates per pass.
pub fn match_optimized(
    map: &PreparedMap,
    scan: &FixedScan,
    xi0: &Pose2D,
    window: &SearchWindow,
) -> Result<MatchResult, CsmError> {
    check_inputs(scan, window)?;
    if window.w != HARDWARE_BLOCK {
        return Err(CsmError::UnsupportedBlock(window.w));
    }
    check_block(map, window)?;
    debug_assert_eq!(map.coarse_rearranged.layout(), CoarseLayout::Rearranged);
    let geometry = MapGeometry::of(&map.fine);
    let x_blocks = window.x_blocks();
    let y_blocks = window.y_blocks();
    let mut best = Best::new(window);
    let mut evals = 0u64;
    let mut idx = DiscretizedScan::default();
    for nt in window.theta_steps() {
        discretize_into(scan, &window.rotated_center(xi0, nt), &geometry, &mut idx);
        for yb in &y_blocks {
            for group in x_blocks.chunks(UNROLL) {
                let coarse = coarse_lanes(&map.coarse_rearranged, &idx, group, yb.start);
                evals += group.len() as u64;
                for (lane, xb) in group.iter().enumerate() {
                    if coarse[lane] as i64 > best.score {
                        evals += fine_block(&map.fine, &idx, *xb, *yb, nt, &mut best);
                    }
                }
            }
        }
    }
    Ok(best.finish(xi0, window, evals))
}

/// Scores up to eight consecutive coarse blocks along x at row offset `ny`.
/// In the rearranged layout the strided cells `c, c + w, …` sit next to each
/// other, so each point contributes one contiguous slice.
fn coarse_lanes(coarse: &CoarseMap, idx: &DiscretizedScan, group: &[Block], ny: i32) -> [u32; UNROLL] {
    let w = coarse.block() as i32;
    let pad = coarse.pad() as i32;
    let columns = coarse.columns() as i32;
    let height = coarse.height() as i32;
    let per_residue = coarse.stride() as i32 / w;
    let lanes = group.len() as i32;
    let nx0 = group[0].start;
    let mut acc = [0u32; UNROLL];
    for c in &idx.indices {
        let row = c.j + ny;
        if row < -pad || row >= height {
            continue;
        }
        // stored column of lane 0; lane l reads c0 + l*w
        let c0 = c.i + nx0 + pad;
        // lanes l with 0 <= c0 + l*w < columns, so no lane aliases into
        // the next residue group
        let lo = if c0 >= 0 { 0 } else { (-c0 + w - 1) / w };
        let hi = if c0 >= columns { 0 } else { ((columns - 1 - c0) / w + 1).min(lanes) };
        if lo >= hi {
            continue;
        }
        let first = c0 + lo * w;
        let base = (first % w) * per_residue + first / w;
        let stored = coarse.stored_row(row);
        let slice = &stored[base as usize..(base + hi - lo) as usize];
        for (a, &v) in acc[lo as usize..hi as usize].iter_mut().zip(slice) {
            *a += v as u32;
        }
    }
    acc
}

/// Fine matching over one `w × w` block, two candidate rows per pass.
/// Scores fit 16-bit lanes (at most 512 · 63). Returns the number of
/// candidates evaluated.
fn fine_block(map: &QuantizedMap, idx: &DiscretizedScan, xb: Block, yb: Block, nt: i32, best: &mut Best) -> u64 {
    let width = map.width() as i32;
    let height = map.height() as i32;
    let cells = map.cells();
    let ext_x = xb.extent as usize;
    let ext_y = yb.extent as i32;
    let mut evals = 0u64;
    let mut ny = yb.start;
    while ny < yb.start + ext_y {
        let rows = (yb.start + ext_y - ny).min(2);
        let mut s = [[0u16; UNROLL]; 2];
        for c in &idx.indices {
            let col = c.i + xb.start;
            let row0 = c.j + ny;
            if col >= 0 && col + UNROLL as i32 <= width && row0 >= 0 && row0 + rows <= height {
                let base = (row0 * width + col) as usize;
                for (jj, acc) in s.iter_mut().enumerate().take(rows as usize) {
                    let start = base + jj * width as usize;
                    let chunk: &[u8; UNROLL] = cells[start..start + UNROLL].try_into().expect("eight cells");
                    for (a, &v) in acc.iter_mut().zip(chunk) {
                        *a += v as u16;
                    }
                }
            } else {
                for (jj, acc) in s.iter_mut().enumerate().take(rows as usize) {
                    let row = row0 + jj as i32;
                    if row < 0 || row >= height {
                        continue;
                    }
                    let line = map.row(row as usize);
                    for (l, a) in acc[..ext_x].iter_mut().enumerate() {
                        let cc = col + l as i32;
                        if cc >= 0 && cc < width {
                            *a += line[cc as usize] as u16;
                        }
                    }
                }
            }
        }
        evals += (rows as usize * ext_x) as u64;
        // first maximum in (row, column) order
        let mut arg = (0usize, 0usize);
        let mut top = s[0][0];
        for (jj, lane) in s.iter().enumerate().take(rows as usize) {
            for (ii, &v) in lane[..ext_x].iter().enumerate() {
                if v > top {
                    top = v;
                    arg = (ii, jj);
                }
            }
        }
        best.offer(top as u32, (xb.start + arg.0 as i32, ny + arg.1 as i32, nt));
        ny += 2;
    }
    evals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{Scan, ScanPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window(wx: u32, wy: u32, wt: u32) -> SearchWindow {
        SearchWindow {
            wx,
            wy,
            wtheta: wt,
            r: 0.05,
            dtheta: 0.02,
            w: 8,
            theta_part: Default::default(),
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (QuantizedMap, FixedScan, Pose2D, SearchWindow) {
        let (w, h) = (rng.random_range(8..=64), rng.random_range(8..=64));
        let map = QuantizedMap::new(w, h, 0.05, (0.0, 0.0), (0..w * h).map(|_| rng.random_range(0..64)).collect()).unwrap();
        let n = rng.random_range(1..=64);
        let scan = Scan::new(
            (0..n).map(|_| ScanPoint::new(rng.random_range(0.1..1.5), rng.random_range(-3.1..3.1))).collect(),
            0.0,
        );
        let xi0 = Pose2D::new(rng.random_range(0.0..w as f64 * 0.05), rng.random_range(0.0..h as f64 * 0.05), rng.random_range(-3.0..3.0));
        let win = window(4 * rng.random_range(0..=4), 4 * rng.random_range(0..=4), rng.random_range(0..=8));
        (map, FixedScan::from_scan(&scan), xi0, win)
    }

    #[test]
    fn single_candidate_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (map, scan, xi0, _) = random_instance(&mut rng);
        let win = window(0, 0, 0);
        let prepared = PreparedMap::new(map.clone(), 8).unwrap();
        let r = match_reference(&prepared, &scan, &xi0, &win).unwrap();
        let idx = super::super::discretize::discretize(&scan, &xi0, &MapGeometry::of(&map));
        assert_eq!(r.pose, xi0);
        assert_eq!(r.score, score_fine(&map, &idx, 0, 0));
        assert_eq!(match_oracle(&map, &scan, &xi0, &win).unwrap().score, r.score);
        assert_eq!(match_optimized(&prepared, &scan, &xi0, &win).unwrap().score, r.score);
    }

    #[test]
    fn three_matchers_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (map, scan, xi0, win) = random_instance(&mut rng);
            let prepared = PreparedMap::new(map.clone(), 8).unwrap();
            let o = match_oracle(&map, &scan, &xi0, &win).unwrap();
            let r = match_reference(&prepared, &scan, &xi0, &win).unwrap();
            let p = match_optimized(&prepared, &scan, &xi0, &win).unwrap();
            assert_eq!((r.score, r.best_steps), (o.score, o.best_steps));
            assert_eq!((p.score, p.best_steps, p.pose), (r.score, r.best_steps, r.pose));
            assert!(p.num_score_evals <= win.unpruned_evaluations());
            assert!(r.score <= 63 * scan.len() as u32);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let map = QuantizedMap::new(8, 8, 0.05, (0.0, 0.0), vec![0; 64]).unwrap();
        let prepared = PreparedMap::new(map.clone(), 8).unwrap();
        let empty = FixedScan::default();
        assert_eq!(match_reference(&prepared, &empty, &Pose2D::identity(), &window(4, 4, 1)).unwrap_err(), CsmError::EmptyScan);
        let scan = FixedScan::from_scan(&Scan::new(vec![ScanPoint::new(1.0, 0.0)], 0.0));
        assert!(matches!(match_reference(&prepared, &scan, &Pose2D::identity(), &window(164, 4, 1)), Err(CsmError::WindowTooLarge(_))));
        let mut w4 = window(4, 4, 1);
        w4.w = 4;
        let p4 = PreparedMap::new(map.clone(), 4).unwrap();
        assert_eq!(match_optimized(&p4, &scan, &Pose2D::identity(), &w4).unwrap_err(), CsmError::UnsupportedBlock(4));
        assert!(match_reference(&p4, &scan, &Pose2D::identity(), &w4).is_ok());
        let mut huge = window(160, 160, 0);
        huge.wtheta = 200;
        assert!(matches!(match_oracle(&map, &scan, &Pose2D::identity(), &huge), Err(CsmError::WindowTooLarge(_))));
    }

    #[test]
    fn all_points_outside_score_zero_and_first_candidate() {
        let map = QuantizedMap::new(8, 8, 0.05, (0.0, 0.0), vec![63; 64]).unwrap();
        let prepared = PreparedMap::new(map.clone(), 8).unwrap();
        let scan = FixedScan::from_scan(&Scan::new(vec![ScanPoint::new(30.0, 0.0)], 0.0));
        let win = window(4, 4, 2);
        let r = match_optimized(&prepared, &scan, &Pose2D::identity(), &win).unwrap();
        assert_eq!(r.score, 0);
        assert_eq!(r.best_steps, (-4, -4, -2));
    }
}
