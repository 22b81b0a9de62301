//! Q16.16 fixed point and table-driven sine/cosine.
//!
//! Everything the matcher does to turn a polar point into a cell index runs
//! through integer arithmetic here, so index sets are reproducible bit for
//! bit on any platform.

use std::sync::OnceLock;

const FRAC_BITS: u32 = 16;
const ONE: i64 = 1 << FRAC_BITS;

/// Signed Q16.16 value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed32(pub i32);

impl Fixed32 {
    pub const ZERO: Fixed32 = Fixed32(0);
    pub const ONE: Fixed32 = Fixed32(1 << FRAC_BITS);

    /// Nearest representable value, saturating at the i32 range.
    pub fn from_f64(x: f64) -> Self {
        let scaled = (x * ONE as f64).round();
        Fixed32(scaled.clamp(i32::MIN as f64, i32::MAX as f64) as i32)
    }

    pub fn from_f32(x: f32) -> Self {
        Self::from_f64(x as f64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / ONE as f64
    }

    pub fn raw(self) -> i32 {
        self.0
    }

    /// Product truncated toward −∞.
    pub fn mul(self, rhs: Fixed32) -> Fixed32 {
        Fixed32(((self.0 as i64 * rhs.0 as i64) >> FRAC_BITS) as i32)
    }

    /// `⌊self · rhs⌋` as an integer.
    pub fn mul_floor(self, rhs: Fixed32) -> i32 {
        ((self.0 as i64 * rhs.0 as i64) >> (2 * FRAC_BITS)) as i32
    }

    pub fn wrapping_add(self, rhs: Fixed32) -> Fixed32 {
        Fixed32(self.0.wrapping_add(rhs.0))
    }
}

impl std::ops::Add for Fixed32 {
    type Output = Fixed32;
    fn add(self, rhs: Fixed32) -> Fixed32 {
        Fixed32(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Fixed32 {
    type Output = Fixed32;
    fn sub(self, rhs: Fixed32) -> Fixed32 {
        Fixed32(self.0 - rhs.0)
    }
}

/// log2 of the number of table entries over one full turn.
const TABLE_BITS: u32 = 14;
const TABLE_LEN: usize = 1 << TABLE_BITS;
/// Bits of the 32-bit phase below the table index, used for interpolation.
const INTERP_BITS: u32 = 32 - TABLE_BITS;
/// Table values are Q1.30.
const TABLE_FRAC_BITS: u32 = 30;

/// `2^16 / (2π)` in Q16: converts Q16.16 radians to a 32-bit turn phase.
const RAD_TO_PHASE: i64 = 683_565_276;

fn sine_table() -> &'static [i32; TABLE_LEN + 1] {
    static TABLE: OnceLock<Box<[i32; TABLE_LEN + 1]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Box::new([0i32; TABLE_LEN + 1]);
        for (k, v) in t.iter_mut().enumerate() {
            let a = 2.0 * std::f64::consts::PI * k as f64 / TABLE_LEN as f64;
            *v = (a.sin() * (1u64 << TABLE_FRAC_BITS) as f64).round() as i32;
        }
        t
    })
}

#[inline]
fn phase_of(angle: Fixed32) -> u32 {
    ((angle.0 as i64 * RAD_TO_PHASE) >> FRAC_BITS) as u32
}

#[inline]
fn sine_of_phase(phase: u32) -> Fixed32 {
    let table = sine_table();
    let idx = (phase >> INTERP_BITS) as usize;
    let frac = (phase & ((1 << INTERP_BITS) - 1)) as i64;
    let a = table[idx] as i64;
    let b = table[idx + 1] as i64;
    let q30 = a + (((b - a) * frac) >> INTERP_BITS);
    let shift = TABLE_FRAC_BITS - FRAC_BITS;
    Fixed32(((q30 + (1 << (shift - 1))) >> shift) as i32)
}

/// Sine and cosine of a Q16.16 angle in radians.
#[inline]
pub fn sin_cos(angle: Fixed32) -> (Fixed32, Fixed32) {
    let p = phase_of(angle);
    (sine_of_phase(p), sine_of_phase(p.wrapping_add(1 << 30)))
}
