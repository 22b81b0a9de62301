use super::map::log_odds_to_prob;
use super::{GridError, GridMap};
use crate::pose::CellIndex;

/// Side length, in cells, of the matcher's on-chip map buffer.
pub const MAX_MAP_CELLS_PER_SIDE: usize = 320;

/// `⌊p·255⌋`, saturating into `[0, 255]`.
pub fn probability_to_byte(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).floor() as u8
}

/// 8-bit map crop as it travels in map packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteMap {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u8>,
}

/// Map window as held by the matcher: 6-bit cells (0..=63), at most
/// 320×320, with the world placement of its cell (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMap {
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    cells: Vec<u8>,
}

fn check_window(width: usize, height: usize) -> Result<(), GridError> {
    if width > MAX_MAP_CELLS_PER_SIDE || height > MAX_MAP_CELLS_PER_SIDE {
        return Err(GridError::WindowTooLarge {
            width,
            height,
            max: MAX_MAP_CELLS_PER_SIDE,
        });
    }
    Ok(())
}

impl QuantizedMap {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: (f64, f64),
        cells: Vec<u8>,
    ) -> Result<Self, GridError> {
        check_window(width, height)?;
        if cells.len() != width * height {
            return Err(GridError::ShapeMismatch {
                got: cells.len(),
                expected: width * height,
            });
        }
        if let Some(&v) = cells.iter().find(|&&v| v > 63) {
            return Err(GridError::ValueOutOfRange(v));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    /// Keeps the high-order 6 bits of each incoming 8-bit value.
    pub fn ingest(bytes: &ByteMap, resolution: f64, origin: (f64, f64)) -> Result<Self, GridError> {
        check_window(bytes.width, bytes.height)?;
        if bytes.cells.len() != bytes.width * bytes.height {
            return Err(GridError::ShapeMismatch {
                got: bytes.cells.len(),
                expected: bytes.width * bytes.height,
            });
        }
        Ok(Self {
            width: bytes.width,
            height: bytes.height,
            resolution,
            origin,
            cells: bytes.cells.iter().map(|&v| v >> 2).collect(),
        })
    }

    /// 8-bit form whose ingestion reproduces this map: `v << 2`.
    pub fn to_bytes(&self) -> ByteMap {
        ByteMap {
            width: self.width,
            height: self.height,
            cells: self.cells.iter().map(|&v| v << 2).collect(),
        }
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
    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn row(&self, j: usize) -> &[u8] {
        &self.cells[j * self.width..(j + 1) * self.width]
    }

    /// Cell value; out-of-bounds cells read 0.
    #[inline]
    pub fn get(&self, i: i32, j: i32) -> u8 {
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            0
        } else {
            self.cells[j as usize * self.width + i as usize]
        }
    }

    pub fn get_cell(&self, c: CellIndex) -> u8 {
        self.get(c.i, c.j)
    }

    /// Applies `f` to every cell; fails if any result exceeds 63.
    pub fn map_values(&self, f: impl Fn(u8) -> u8) -> Result<Self, GridError> {
        Self::new(
            self.width,
            self.height,
            self.resolution,
            self.origin,
            self.cells.iter().map(|&v| f(v)).collect(),
        )
    }
}

impl GridMap {
    /// Crops a `width × height` window centered on `center` (world), shifted
    /// to stay inside the map where it fits, and converts it to 8-bit
    /// values `⌊p·255⌋`. Returns the bytes and the crop's world origin.
    pub fn crop_bytes(
        &self,
        center: (f64, f64),
        width: usize,
        height: usize,
    ) -> Result<(ByteMap, (f64, f64)), GridError> {
        check_window(width, height)?;
        let c = self.world_to_cell(center.0, center.1);
        let start_i = clamp_start(c.i - (width / 2) as i32, width, self.width());
        let start_j = clamp_start(c.j - (height / 2) as i32, height, self.height());
        let mut cells = vec![0u8; width * height];
        for (dj, row) in cells.chunks_mut(width.max(1)).enumerate().take(height) {
            for (di, v) in row.iter_mut().enumerate() {
                let src = CellIndex::new(start_i + di as i32, start_j + dj as i32);
                if let Some(l) = self.log_odds(src) {
                    *v = probability_to_byte(log_odds_to_prob(l));
                }
            }
        }
        let origin = (
            self.origin().0 + start_i as f64 * self.resolution(),
            self.origin().1 + start_j as f64 * self.resolution(),
        );
        Ok((ByteMap { width, height, cells }, origin))
    }

    /// Crop then 6-bit ingestion.
    pub fn quantize(&self, center: (f64, f64), width: usize, height: usize) -> Result<QuantizedMap, GridError> {
        let (bytes, origin) = self.crop_bytes(center, width, height)?;
        QuantizedMap::ingest(&bytes, self.resolution(), origin)
    }
}

/// Start index of a window of `len` cells so that it lies inside
/// `[0, size)` when it can; windows larger than the map start at 0.
fn clamp_start(start: i32, len: usize, size: usize) -> i32 {
    if len >= size {
        0
    } else {
        start.clamp(0, (size - len) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_conversion_examples() {
        assert_eq!(probability_to_byte(1.0), 255);
        assert_eq!(probability_to_byte(1.0) >> 2, 63);
        assert_eq!(probability_to_byte(0.0), 0);
        assert_eq!(0x07u8 >> 2, 0x01);
        let b = ByteMap {
            width: 1,
            height: 1,
            cells: vec![0x07],
        };
        assert_eq!(QuantizedMap::ingest(&b, 0.05, (0.0, 0.0)).unwrap().get(0, 0), 1);
    }

    #[test]
    fn truncation_is_shift_for_every_byte() {
        let b = ByteMap {
            width: 16,
            height: 16,
            cells: (0..=255u8).collect(),
        };
        let q = QuantizedMap::ingest(&b, 0.05, (0.0, 0.0)).unwrap();
        for (v, &c) in (0..=255u8).zip(q.cells()) {
            assert_eq!(c, v >> 2);
            assert!(c <= 63);
        }
    }

    #[test]
    fn quantization_is_monotone() {
        let mut last = 0;
        for k in 0..=10_000 {
            let q = probability_to_byte(k as f64 / 10_000.0) >> 2;
            assert!(q >= last);
            last = q;
        }
    }

    #[test]
    fn rejects_oversized_windows() {
        let m = GridMap::new(400, 400, 0.05, (0.0, 0.0));
        assert!(matches!(m.quantize((10.0, 10.0), 321, 10), Err(GridError::WindowTooLarge { .. })));
        assert!(m.quantize((10.0, 10.0), 320, 320).is_ok());
    }

    #[test]
    fn crop_clamps_to_map_and_reads_probabilities() {
        let mut probs = vec![0.5; 50 * 40];
        probs[3 * 50 + 7] = 1.0;
        probs[0] = 0.0;
        let m = GridMap::from_probabilities(50, 40, 0.05, (-1.0, -1.0), &probs);
        // centered near the lower-left corner: window shifts to start at 0
        let q = m.quantize((-1.0, -1.0), 20, 20).unwrap();
        assert_eq!(q.origin(), (-1.0, -1.0));
        assert_eq!(q.get(7, 3), 63);
        assert_eq!(q.get(0, 0), 0);
        assert_eq!(q.get(1, 1), 127 >> 2);
        assert_eq!(q.get(-1, 0), 0);
        assert_eq!(q.get(20, 0), 0);
    }

    #[test]
    fn window_larger_than_map_pads_with_zero() {
        let m = GridMap::from_probabilities(4, 4, 0.1, (0.0, 0.0), &[1.0; 16]);
        let q = m.quantize((0.2, 0.2), 8, 8).unwrap();
        assert_eq!(q.get(3, 3), 63);
        assert_eq!(q.get(4, 4), 0);
        assert_eq!(q.get(7, 0), 0);
    }
}
