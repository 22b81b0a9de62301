//! Occupancy grids: the log-odds working map, its 8-bit/6-bit transfer
//! forms, and the sliding-window-maximum coarse map used for pruning.

mod coarse;
mod map;
mod quantized;

pub use coarse::{build_coarse, build_coarse_direct, rearranged_column, CoarseLayout, CoarseMap};
pub use map::{GridMap, LogOddsModel, DEFAULT_RESOLUTION};
pub(crate) use map::trace_ray;
pub use quantized::{probability_to_byte, ByteMap, QuantizedMap, MAX_MAP_CELLS_PER_SIDE};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("window of {width}x{height} cells exceeds the {max}x{max} matcher buffer")]
    WindowTooLarge { width: usize, height: usize, max: usize },
    #[error("cell value {0} does not fit in 6 bits")]
    ValueOutOfRange(u8),
    #[error("cell buffer has {got} entries, expected {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("coarse map is already in the rearranged layout")]
    AlreadyRearranged,
    #[error("block size must be at least 1")]
    ZeroBlock,
}
