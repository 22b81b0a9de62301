//! Planar pose algebra, polar scans and scan-to-grid projection.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut t = theta.rem_euclid(two_pi);
    if t > PI {
        t -= two_pi;
    }
    // rem_euclid can land on exactly -π after the subtraction only through
    // rounding; fold it onto the closed end.
    if t <= -PI {
        t += two_pi;
    }
    t
}

/// Robot or sensor pose in the plane. `theta` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    /// `self ⊕ other`: applies `other`, expressed in this pose's frame.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            c * other.x - s * other.y + self.x,
            s * other.x + c * other.y + self.y,
            self.theta + other.theta,
        )
    }

    /// `self ⊖ base`: this pose expressed in the frame of `base`.
    pub fn relative_to(&self, base: &Pose2D) -> Pose2D {
        let (s, c) = base.theta.sin_cos();
        let dx = self.x - base.x;
        let dy = self.y - base.y;
        Pose2D::new(c * dx + s * dy, -s * dx + c * dy, self.theta - base.theta)
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    /// Maps a point given in this pose's frame into the parent frame.
    pub fn transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * px - s * py + self.x, s * px + c * py + self.y)
    }

    pub fn translation_norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// `a ⊕ b`.
pub fn compose(a: &Pose2D, b: &Pose2D) -> Pose2D {
    a.compose(b)
}

/// `j ⊖ i = (R(θ_i)ᵀ(t_j − t_i), θ_j − θ_i)`.
pub fn relative(j: &Pose2D, i: &Pose2D) -> Pose2D {
    j.relative_to(i)
}

/// One LiDAR return in the sensor's polar frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub range: f64,
    pub angle: f64,
}

impl ScanPoint {
    pub fn new(range: f64, angle: f64) -> Self {
        Self { range, angle }
    }

    /// Cartesian coordinates in the sensor frame.
    pub fn to_xy(&self) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        (self.range * c, self.range * s)
    }
}

/// Ordered set of returns from one sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scan {
    pub points: Vec<ScanPoint>,
    pub timestamp: f64,
}

impl Scan {
    pub fn new(points: Vec<ScanPoint>, timestamp: f64) -> Self {
        Self { points, timestamp }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_range(&self) -> f64 {
        self.points.iter().map(|p| p.range).fold(0.0, f64::max)
    }
}

/// Integer cell coordinates; `i` is the column (x), `j` the row (y).
/// May lie outside any particular map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub i: i32,
    pub j: i32,
}

impl CellIndex {
    pub const fn new(i: i32, j: i32) -> Self {
        Self { i, j }
    }
}

/// Projects a scan point at pose `xi` onto the grid anchored at `origin`
/// (world coordinates of cell (0, 0)'s corner). Uses floor, not round.
pub fn project_point(xi: &Pose2D, z: &ScanPoint, resolution: f64, origin: (f64, f64)) -> CellIndex {
    debug_assert!(resolution > 0.0);
    let a = z.angle + xi.theta;
    let wx = z.range * a.cos() + xi.x - origin.0;
    let wy = z.range * a.sin() + xi.y - origin.1;
    CellIndex::new((wx / resolution).floor() as i32, (wy / resolution).floor() as i32)
}

/// Maximum number of points the matcher's scan buffer holds.
pub const MAX_SCAN_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub min_range: f64,
    pub max_range: f64,
    pub max_points: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_range: 0.1,
            max_range: 30.0,
            max_points: MAX_SCAN_POINTS,
        }
    }
}

/// Range gating followed by uniform-stride decimation down to
/// `cfg.max_points` (never above 512). Angular order is preserved.
pub fn preprocess_scan(raw: &Scan, cfg: &PreprocessConfig) -> Scan {
    let cap = cfg.max_points.min(MAX_SCAN_POINTS).max(1);
    let kept: Vec<ScanPoint> = raw
        .points
        .iter()
        .copied()
        .filter(|p| p.range.is_finite() && p.range >= cfg.min_range && p.range <= cfg.max_range)
        .collect();
    let points = if kept.len() > cap {
        let stride = kept.len().div_ceil(cap);
        kept.into_iter().step_by(stride).collect()
    } else {
        kept
    };
    Scan {
        points,
        timestamp: raw.timestamp,
    }
}
