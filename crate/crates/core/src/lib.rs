//! Evidential 3-D dynamic occupancy mapping with particle-based velocity
//! estimation.

pub mod dst;
pub mod grid;
pub mod measurement;
pub mod particles;
pub mod pipeline;
pub mod rng;
pub mod sim;
pub mod eval;
pub mod io;
pub mod app;
