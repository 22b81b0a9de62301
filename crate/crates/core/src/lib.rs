pub mod bench;
pub mod csm;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod grid;
pub mod pose;
pub mod refine;
pub mod slam;
