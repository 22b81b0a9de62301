use super::fixed::{sin_cos, Fixed32};
use crate::grid::{CoarseMap, QuantizedMap};
use crate::pose::{CellIndex, Pose2D, Scan};

/// Scan as held in the matcher's buffer: each point's range and angle went
/// through f32 (the packet format) and then Q16.16.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FixedScan {
    points: Vec<(Fixed32, Fixed32)>,
}

impl FixedScan {
    pub fn from_scan(scan: &Scan) -> Self {
        Self::from_f32_pairs(scan.points.iter().map(|p| (p.range as f32, p.angle as f32)))
    }

    pub fn from_f32_pairs(pairs: impl IntoIterator<Item = (f32, f32)>) -> Self {
        Self {
            points: pairs
                .into_iter()
                .map(|(r, a)| (Fixed32::from_f32(r), Fixed32::from_f32(a)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(Fixed32, Fixed32)] {
        &self.points
    }
}

/// Cell indices of every scan point for one candidate rotation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiscretizedScan {
    pub indices: Vec<CellIndex>,
}

impl DiscretizedScan {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Where a quantized map sits in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapGeometry {
    pub resolution: f64,
    pub origin: (f64, f64),
}

impl MapGeometry {
    pub fn of(map: &QuantizedMap) -> Self {
        Self {
            resolution: map.resolution(),
            origin: map.origin(),
        }
    }
}

/// Projects every point at pose `xi` into cell indices of the map described
/// by `geometry`, entirely in fixed point.
pub fn discretize(scan: &FixedScan, xi: &Pose2D, geometry: &MapGeometry) -> DiscretizedScan {
    let mut out = DiscretizedScan {
        indices: Vec::with_capacity(scan.len()),
    };
    discretize_into(scan, xi, geometry, &mut out);
    out
}

pub(crate) fn discretize_into(scan: &FixedScan, xi: &Pose2D, geometry: &MapGeometry, out: &mut DiscretizedScan) {
    let theta = Fixed32::from_f64(xi.theta);
    let tx = Fixed32::from_f64(xi.x - geometry.origin.0);
    let ty = Fixed32::from_f64(xi.y - geometry.origin.1);
    let inv_res = Fixed32::from_f64(1.0 / geometry.resolution);
    out.indices.clear();
    out.indices.extend(scan.points.iter().map(|&(range, angle)| {
        let (s, c) = sin_cos(angle.wrapping_add(theta));
        let px = range.mul(c) + tx;
        let py = range.mul(s) + ty;
        CellIndex::new(px.mul_floor(inv_res), py.mul_floor(inv_res))
    }));
}

/// `Σ_k M(i_k + n_x, j_k + n_y)`, out-of-bounds cells contributing 0.
pub fn score_fine(map: &QuantizedMap, idx: &DiscretizedScan, nx: i32, ny: i32) -> u32 {
    idx.indices
        .iter()
        .map(|c| map.get(c.i + nx, c.j + ny) as u32)
        .sum()
}

/// `Σ_k M′(i_k + n_x′, j_k + n_y′)`, out-of-bounds cells contributing 0.
pub fn score_coarse(coarse: &CoarseMap, idx: &DiscretizedScan, nx: i32, ny: i32) -> u32 {
    idx.indices
        .iter()
        .map(|c| coarse.get(c.i + nx, c.j + ny) as u32)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_coarse;
    use crate::pose::{project_point, ScanPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom() -> MapGeometry {
        MapGeometry {
            resolution: 0.05,
            origin: (0.0, 0.0),
        }
    }

    #[test]
    fn axis_point() {
        let scan = FixedScan::from_scan(&Scan::new(vec![ScanPoint::new(1.0, 0.0)], 0.0));
        let d = discretize(&scan, &Pose2D::identity(), &geom());
        assert_eq!(d.indices, vec![CellIndex::new(20, 0)]);
    }

    #[test]
    fn fixed_point_within_one_cell_of_float() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0;
        for _ in 0..10_000 {
            let z = ScanPoint::new(rng.random_range(0.05..20.0), rng.random_range(-3.2..3.2));
            let xi = Pose2D::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-3.2..3.2));
            let origin = (rng.random_range(-10.0..0.0), rng.random_range(-10.0..0.0));
            let g = MapGeometry { resolution: 0.05, origin };
            let fixed = discretize(&FixedScan::from_scan(&Scan::new(vec![z], 0.0)), &xi, &g).indices[0];
            let float = project_point(&xi, &z, 0.05, origin);
            worst = worst.max((fixed.i - float.i).abs()).max((fixed.j - float.j).abs());
        }
        assert!(worst <= 1, "worst disagreement {worst} cells");
    }

    #[test]
    fn fine_score_examples() {
        let map = QuantizedMap::new(4, 4, 0.05, (0.0, 0.0), {
            let mut c = vec![0u8; 16];
            c[1 * 4 + 2] = 63;
            c
        })
        .unwrap();
        assert_eq!(score_fine(&map, &DiscretizedScan::default(), 0, 0), 0);
        let one = DiscretizedScan {
            indices: vec![CellIndex::new(2, 1)],
        };
        assert_eq!(score_fine(&map, &one, 0, 0), 63);
        let outside = DiscretizedScan {
            indices: vec![CellIndex::new(-1, 0), CellIndex::new(4, 2), CellIndex::new(0, 40)],
        };
        assert_eq!(score_fine(&map, &outside, 0, 0), 0);
    }

    #[test]
    fn coarse_score_examples() {
        let map = QuantizedMap::new(16, 16, 0.05, (0.0, 0.0), vec![9; 256]).unwrap();
        let coarse = build_coarse(&map, 4).unwrap();
        let idx = DiscretizedScan {
            indices: (0..10).map(|k| CellIndex::new(k, 15 - k)).collect(),
        };
        assert_eq!(score_coarse(&coarse, &idx, 0, 0), 90);
        let single = DiscretizedScan {
            indices: vec![CellIndex::new(3, 7)],
        };
        assert_eq!(score_coarse(&coarse, &single, 2, -1), coarse.get(5, 6) as u32);
    }

    #[test]
    fn coarse_bounds_fine_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let map = QuantizedMap::new(32, 32, 0.05, (0.0, 0.0), (0..1024).map(|_| rng.random_range(0..64)).collect()).unwrap();
            let w = 4;
            let coarse = build_coarse(&map, w).unwrap();
            let idx = DiscretizedScan {
                indices: (0..20).map(|_| CellIndex::new(rng.random_range(-4..36), rng.random_range(-4..36))).collect(),
            };
            let (nx, ny) = (rng.random_range(-6..6), rng.random_range(-6..6));
            let upper = score_coarse(&coarse, &idx, nx, ny);
            for dj in 0..w as i32 {
                for di in 0..w as i32 {
                    assert!(upper >= score_fine(&map, &idx, nx + di, ny + dj));
                }
            }
        }
    }
}
