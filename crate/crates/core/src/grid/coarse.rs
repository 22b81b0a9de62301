use super::{GridError, QuantizedMap};

/// Column order of a coarse map's rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseLayout {
    RowMajor,
    /// Columns grouped by residue modulo `w`, so that strided reads
    /// `c, c + w, c + 2w, …` become contiguous.
    Rearranged,
}

/// Sliding-window maximum of a quantized map: cell (i, j) holds the
/// maximum over the `w × w` block starting at (i, j). Storage extends
/// `w − 1` cells past the low edges in both directions, so blocks that
/// start left of or below the map still bound the cells they overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMap {
    width: usize,
    height: usize,
    block: usize,
    pad: usize,
    layout: CoarseLayout,
    stride: usize,
    cells: Vec<u8>,
}

/// Destination column of source column `c` in the rearranged layout.
pub fn rearranged_column(c: usize, width: usize, w: usize) -> usize {
    (c % w) * width.div_ceil(w) + c / w
}

/// Two-pass construction: a max along `j` over `w` rows, then a max along
/// `i` over `w` columns. Reads past the map edge count as 0.
pub fn build_coarse(map: &QuantizedMap, w: usize) -> Result<CoarseMap, GridError> {
    if w == 0 {
        return Err(GridError::ZeroBlock);
    }
    let (width, height) = (map.width(), map.height());
    let pad = w - 1;
    let (cols, rows) = (width + pad, height + pad);
    let src = map.cells();
    // column_max row r holds M'' at logical row r - pad
    let mut column_max = vec![0u8; width * rows];
    for r in 0..rows {
        let dst = &mut column_max[r * width..(r + 1) * width];
        let lo = r.saturating_sub(pad);
        let hi = (r + 1).min(height);
        for jj in lo..hi {
            for (d, &s) in dst.iter_mut().zip(&src[jj * width..(jj + 1) * width]) {
                *d = (*d).max(s);
            }
        }
    }
    let mut cells = vec![0u8; cols * rows];
    for r in 0..rows {
        let row = &column_max[r * width..(r + 1) * width];
        let out = &mut cells[r * cols..(r + 1) * cols];
        for (c, o) in out.iter_mut().enumerate() {
            let lo = c.saturating_sub(pad);
            let hi = (c + 1).min(width);
            *o = row.get(lo..hi).and_then(|s| s.iter().copied().max()).unwrap_or(0);
        }
    }
    Ok(CoarseMap {
        width,
        height,
        block: w,
        pad,
        layout: CoarseLayout::RowMajor,
        stride: cols,
        cells,
    })
}

/// Direct evaluation of the block maximum, one cell at a time.
pub fn build_coarse_direct(map: &QuantizedMap, w: usize) -> Result<CoarseMap, GridError> {
    if w == 0 {
        return Err(GridError::ZeroBlock);
    }
    let (width, height) = (map.width(), map.height());
    let pad = w - 1;
    let (cols, rows) = (width + pad, height + pad);
    let mut cells = vec![0u8; cols * rows];
    for r in 0..rows {
        for c in 0..cols {
            let (i, j) = (c as i32 - pad as i32, r as i32 - pad as i32);
            let mut m = 0u8;
            for dj in 0..w as i32 {
                for di in 0..w as i32 {
                    m = m.max(map.get(i + di, j + dj));
                }
            }
            cells[r * cols + c] = m;
        }
    }
    Ok(CoarseMap {
        width,
        height,
        block: w,
        pad,
        layout: CoarseLayout::RowMajor,
        stride: cols,
        cells,
    })
}

impl CoarseMap {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn block(&self) -> usize {
        self.block
    }
    pub fn layout(&self) -> CoarseLayout {
        self.layout
    }
    /// Cells stored before logical index 0 along each axis.
    pub fn pad(&self) -> usize {
        self.pad
    }
    /// Stored columns per row before any rearrangement padding.
    pub fn columns(&self) -> usize {
        self.width + self.pad
    }
    /// Stored row length; in the rearranged layout this is
    /// `w·⌈columns/w⌉`, with zero padding in unused slots.
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Raw storage of logical row `j`, which must lie in `[−pad, height)`.
    pub fn stored_row(&self, j: i32) -> &[u8] {
        let r = (j + self.pad as i32) as usize;
        &self.cells[r * self.stride..(r + 1) * self.stride]
    }

    /// Logical lookup independent of layout; reads outside the stored
    /// range return 0.
    #[inline]
    pub fn get(&self, i: i32, j: i32) -> u8 {
        let pad = self.pad as i32;
        if i < -pad || j < -pad || i >= self.width as i32 || j >= self.height as i32 {
            return 0;
        }
        let c = (i + pad) as usize;
        let col = match self.layout {
            CoarseLayout::RowMajor => c,
            CoarseLayout::Rearranged => rearranged_column(c, self.columns(), self.block),
        };
        self.cells[(j + pad) as usize * self.stride + col]
    }

    pub fn rearrange(&self) -> Result<CoarseMap, GridError> {
        if self.layout == CoarseLayout::Rearranged {
            return Err(GridError::AlreadyRearranged);
        }
        let w = self.block;
        let cols = self.columns();
        let rows = self.height + self.pad;
        let stride = w * cols.div_ceil(w);
        let mut cells = vec![0u8; stride * rows];
        for r in 0..rows {
            let src = &self.cells[r * cols..(r + 1) * cols];
            let dst = &mut cells[r * stride..(r + 1) * stride];
            for (c, &v) in src.iter().enumerate() {
                dst[rearranged_column(c, cols, w)] = v;
            }
        }
        Ok(CoarseMap {
            layout: CoarseLayout::Rearranged,
            stride,
            cells,
            ..*self
        })
    }

    /// Inverse permutation back to row-major.
    pub fn to_row_major(&self) -> CoarseMap {
        if self.layout == CoarseLayout::RowMajor {
            return self.clone();
        }
        let pad = self.pad as i32;
        let cols = self.columns();
        let mut cells = Vec::with_capacity(cols * (self.height + self.pad));
        for j in -pad..self.height as i32 {
            for i in -pad..self.width as i32 {
                cells.push(self.get(i, j));
            }
        }
        CoarseMap {
            layout: CoarseLayout::RowMajor,
            stride: cols,
            cells,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qmap(width: usize, height: usize, cells: Vec<u8>) -> QuantizedMap {
        QuantizedMap::new(width, height, 0.05, (0.0, 0.0), cells).unwrap()
    }

    fn random_map(rng: &mut ChaCha8Rng, width: usize, height: usize) -> QuantizedMap {
        qmap(width, height, (0..width * height).map(|_| rng.random_range(0..=63)).collect())
    }

    #[test]
    fn constant_map_stays_constant_in_bounds() {
        let q = qmap(16, 12, vec![17; 16 * 12]);
        let c = build_coarse(&q, 4).unwrap();
        for j in 0..12 {
            for i in 0..16 {
                assert_eq!(c.get(i, j), 17);
            }
        }
    }

    #[test]
    fn two_by_two_block() {
        let q = qmap(2, 2, vec![1, 2, 3, 4]);
        assert_eq!(build_coarse(&q, 2).unwrap().get(0, 0), 4);
    }

    #[test]
    fn two_pass_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &w in &[1usize, 2, 3, 4, 8] {
            let q = random_map(&mut rng, 64, 64);
            assert_eq!(build_coarse(&q, w).unwrap(), build_coarse_direct(&q, w).unwrap());
        }
    }

    #[test]
    fn dominance_over_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_map(&mut rng, 37, 29);
        let w = 8;
        let c = build_coarse(&q, w).unwrap();
        for j in 0..29i32 {
            for i in 0..37i32 {
                for dj in 0..w as i32 {
                    for di in 0..w as i32 {
                        assert!(c.get(i, j) >= q.get(i + di, j + dj));
                    }
                }
            }
        }
    }

    #[test]
    fn low_edge_blocks_bound_overlapping_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = random_map(&mut rng, 12, 10);
        let w = 4;
        let c = build_coarse(&q, w).unwrap();
        for j in -(w as i32)..0 {
            for i in -(w as i32)..0 {
                let mut m = 0;
                for dj in 0..w as i32 {
                    for di in 0..w as i32 {
                        m = m.max(q.get(i + di, j + dj));
                    }
                }
                assert_eq!(c.get(i, j), m);
            }
        }
    }

    #[test]
    fn rearrange_example_row() {
        let q = qmap(6, 1, vec![10, 11, 12, 13, 14, 15]);
        let c = build_coarse(&q, 1).unwrap();
        let c = CoarseMap { block: 3, ..c };
        let r = c.rearrange().unwrap();
        assert_eq!(r.stored_row(0), &[10, 13, 11, 14, 12, 15]);
        assert_eq!(r.to_row_major(), c);
        assert_eq!(r.rearrange(), Err(GridError::AlreadyRearranged));
    }

    #[test]
    fn rearranged_reads_match_row_major() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(w, width) in &[(8usize, 37usize), (8, 64), (3, 10), (4, 5)] {
            let q = random_map(&mut rng, width, 9);
            let c = build_coarse(&q, w).unwrap();
            let r = c.rearrange().unwrap();
            assert_eq!(r.stride() % w, 0);
            for j in -1..10 {
                for i in -2..width as i32 + 2 {
                    assert_eq!(r.get(i, j), c.get(i, j));
                }
            }
            assert_eq!(r.to_row_major(), c);
        }
    }

    #[test]
    fn strided_columns_become_contiguous() {
        let (width, w) = (40usize, 8usize);
        for c0 in 0..w {
            let cols: Vec<usize> = (c0..width).step_by(w).map(|c| rearranged_column(c, width, w)).collect();
            for pair in cols.windows(2) {
                assert_eq!(pair[1], pair[0] + 1);
            }
        }
    }
}
