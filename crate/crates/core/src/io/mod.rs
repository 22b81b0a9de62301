//! Dataset logs, the synthetic world generator and image output.

pub mod carmen;
pub mod render;
pub mod sim;

pub use carmen::{parse_carmen, serialize_carmen, CarmenConfig, CarmenError, EntryKind, LogEntry};
pub use render::{render_pgm, render_png};
pub use sim::{simulate, LidarModel, OdometryNoise, Segment, SimOutput, SyntheticWorld};
