//! Correlative scan matching with the semantics of the hardware core:
//! Q16.16 discretization, 6-bit maps of at most 320×320 cells, a 512-point
//! scan buffer, coarse-to-fine search with pruning, map/scan reuse and a
//! 64-bit packet boundary.

mod discretize;
mod engine;
pub mod fixed;
mod matcher;
pub mod packet;
mod window;

pub use discretize::{discretize, score_coarse, score_fine, DiscretizedScan, FixedScan, MapGeometry};
pub use engine::{Algorithm, CsmEngine, EngineStats, MatchQuery};
pub use fixed::Fixed32;
pub use matcher::{
    match_optimized, match_oracle, match_reference, match_reference_observed, CoarseVisit, PreparedMap,
    ORACLE_CANDIDATE_LIMIT,
};
pub use window::{default_angular_step, Block, MatchResult, SearchWindow, ThetaPart, HARDWARE_BLOCK};

use crate::grid::GridError;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CsmError {
    #[error("scan has no points")]
    EmptyScan,
    #[error("scan has {0} points, the buffer holds 512")]
    ScanTooLong(usize),
    #[error("search window too large: {0}")]
    WindowTooLarge(String),
    #[error("invalid search window: {0}")]
    InvalidWindow(String),
    #[error("block size {0} is not supported by the parallel matcher (needs 8)")]
    UnsupportedBlock(u32),
    #[error("coarse map was built with w = {map} but the window uses w = {window}")]
    BlockMismatch { map: u32, window: u32 },
    #[error("reuse requested for the {0} but none is loaded")]
    ReuseWithoutLoad(&'static str),
    #[error("malformed packet stream: {0}")]
    MalformedPacket(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}
