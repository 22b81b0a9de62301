use super::CsmError;
use crate::grid::MAX_MAP_CELLS_PER_SIDE;
use crate::pose::Pose2D;

/// Block size the parallel matcher is built around.
pub const HARDWARE_BLOCK: u32 = 8;

/// Which part of the angular range a query covers. Halves are used when two
/// engines split one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaPart {
    #[default]
    Full,
    /// `n_θ ∈ [−w_θ, 0)`
    Lower,
    /// `n_θ ∈ [0, w_θ)`
    Upper,
}

/// Discrete search window `[−w_x, w_x) × [−w_y, w_y) × [−w_θ, w_θ)` in
/// steps of `(r, r, δθ)`. A zero half-extent means the single offset 0
/// along that axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchWindow {
    pub wx: u32,
    pub wy: u32,
    pub wtheta: u32,
    /// Linear step, equal to the map resolution.
    pub r: f64,
    pub dtheta: f64,
    /// Coarse block size in cells.
    pub w: u32,
    pub theta_part: ThetaPart,
}

/// Contiguous run of `extent` candidate offsets starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub start: i32,
    pub extent: u32,
}

/// Angular step that makes the arc swept at `max_range` match the linear step.
pub fn default_angular_step(resolution: f64, max_range: f64) -> f64 {
    if max_range > resolution {
        resolution / max_range
    } else {
        resolution
    }
}

impl SearchWindow {
    /// Window from metric half-extents. Linear extents are rounded up to
    /// the next size whose full width is a multiple of `w`.
    pub fn from_metric(half_x: f64, half_y: f64, half_theta: f64, resolution: f64, dtheta: f64, w: u32) -> Self {
        let cells = |m: f64| -> u32 {
            let n = (m / resolution - 1e-9).ceil().max(0.0) as u32;
            if n == 0 {
                return 0;
            }
            let mut blocks = (2 * n).div_ceil(w);
            if (blocks * w) % 2 == 1 {
                blocks += 1;
            }
            blocks * w / 2
        };
        Self {
            wx: cells(half_x),
            wy: cells(half_y),
            wtheta: (half_theta / dtheta - 1e-9).ceil().max(0.0) as u32,
            r: resolution,
            dtheta,
            w,
            theta_part: ThetaPart::Full,
        }
    }

    pub fn with_theta_part(self, part: ThetaPart) -> Self {
        Self {
            theta_part: part,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), CsmError> {
        if self.w == 0 {
            return Err(CsmError::InvalidWindow("block size w must be at least 1".into()));
        }
        if !(self.r > 0.0) || !self.dtheta.is_finite() || self.dtheta < 0.0 {
            return Err(CsmError::InvalidWindow("steps must be positive and finite".into()));
        }
        for (name, half) in [("x", self.wx), ("y", self.wy)] {
            if (2 * half) % self.w != 0 {
                return Err(CsmError::InvalidWindow(format!(
                    "2·w{name} = {} is not a multiple of w = {}",
                    2 * half,
                    self.w
                )));
            }
            if 2 * half as usize > MAX_MAP_CELLS_PER_SIDE {
                return Err(CsmError::WindowTooLarge(format!(
                    "2·w{name} = {} exceeds {MAX_MAP_CELLS_PER_SIDE}",
                    2 * half
                )));
            }
        }
        if self.theta_part != ThetaPart::Full && self.wtheta == 0 {
            return Err(CsmError::InvalidWindow("cannot split an empty angular range".into()));
        }
        Ok(())
    }

    fn blocks(half: u32, w: u32) -> Vec<Block> {
        if half == 0 {
            return vec![Block { start: 0, extent: 1 }];
        }
        (0..2 * half / w)
            .map(|b| Block {
                start: -(half as i32) + (b * w) as i32,
                extent: w,
            })
            .collect()
    }

    /// Coarse blocks along x (offsets `n_x'` with their extents).
    pub fn x_blocks(&self) -> Vec<Block> {
        Self::blocks(self.wx, self.w)
    }

    pub fn y_blocks(&self) -> Vec<Block> {
        Self::blocks(self.wy, self.w)
    }

    pub fn theta_steps(&self) -> std::ops::Range<i32> {
        let h = self.wtheta as i32;
        match self.theta_part {
            ThetaPart::Full if h == 0 => 0..1,
            ThetaPart::Full => -h..h,
            ThetaPart::Lower => -h..0,
            ThetaPart::Upper => 0..h,
        }
    }

    fn axis_count(half: u32) -> u64 {
        if half == 0 {
            1
        } else {
            2 * half as u64
        }
    }

    /// Total number of candidates `(n_x, n_y, n_θ)`.
    pub fn candidate_count(&self) -> u64 {
        Self::axis_count(self.wx) * Self::axis_count(self.wy) * self.theta_steps().len() as u64
    }

    /// Score evaluations of a coarse-plus-fine sweep that never prunes.
    pub fn unpruned_evaluations(&self) -> u64 {
        let coarse = self.x_blocks().len() as u64 * self.y_blocks().len() as u64 * self.theta_steps().len() as u64;
        coarse + self.candidate_count()
    }

    /// Pose of the discretization for angular step `n_θ` (no translation offset).
    pub fn rotated_center(&self, xi0: &Pose2D, ntheta: i32) -> Pose2D {
        Pose2D::new(xi0.x, xi0.y, xi0.theta + self.dtheta * ntheta as f64)
    }

    /// `(ξ_x⁰ + r·n_x, ξ_y⁰ + r·n_y, ξ_θ⁰ + δθ·n_θ)`.
    pub fn candidate_pose(&self, xi0: &Pose2D, steps: (i32, i32, i32)) -> Pose2D {
        Pose2D::new(
            xi0.x + self.r * steps.0 as f64,
            xi0.y + self.r * steps.1 as f64,
            xi0.theta + self.dtheta * steps.2 as f64,
        )
    }
}

/// Outcome of one match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub pose: Pose2D,
    /// Sum of 6-bit cell values at the winning candidate.
    pub score: u32,
    pub best_steps: (i32, i32, i32),
    /// Coarse and fine score evaluations performed.
    pub num_score_evals: u64,
}

impl MatchResult {
    /// Score per point in `[0, 63]`.
    pub fn normalized_score(&self, num_points: usize) -> f64 {
        if num_points == 0 {
            0.0
        } else {
            self.score as f64 / num_points as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_window_rounds_to_block_multiple() {
        let w = SearchWindow::from_metric(0.25, 0.25, 0.25, 0.05, 0.005, 8);
        assert_eq!((w.wx, w.wy, w.wtheta), (8, 8, 50));
        assert!(w.validate().is_ok());
        let w = SearchWindow::from_metric(2.5, 2.5, 0.5, 0.05, 0.00625, 8);
        assert_eq!((w.wx, w.wy, w.wtheta), (52, 52, 80));
        let w = SearchWindow::from_metric(0.0, 0.0, 0.0, 0.05, 0.01, 8);
        assert_eq!(w.candidate_count(), 1);
        let w = SearchWindow::from_metric(0.05, 0.05, 0.0, 0.05, 0.01, 3);
        assert_eq!((2 * w.wx) % 3, 0);
        assert!(w.validate().is_ok());
    }

    #[test]
    fn validation_errors() {
        let mut w = SearchWindow::from_metric(0.25, 0.25, 0.25, 0.05, 0.005, 8);
        w.wx = 5;
        assert!(matches!(w.validate(), Err(CsmError::InvalidWindow(_))));
        w.wx = 164;
        assert!(matches!(w.validate(), Err(CsmError::WindowTooLarge(_))));
    }

    #[test]
    fn blocks_cover_window() {
        let w = SearchWindow::from_metric(0.4, 0.2, 0.1, 0.05, 0.05, 8);
        let xs: Vec<i32> = w.x_blocks().iter().flat_map(|b| b.start..b.start + b.extent as i32).collect();
        assert_eq!(xs, (-8..8).collect::<Vec<_>>());
        assert_eq!(w.theta_steps(), -2..2);
        assert_eq!(w.with_theta_part(ThetaPart::Lower).theta_steps(), -2..0);
        assert_eq!(w.with_theta_part(ThetaPart::Upper).theta_steps(), 0..2);
    }
}
