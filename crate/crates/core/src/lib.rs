//! Simulator and training engine for a cooperative two-agent image-guessing
//! game. A question bot sees only the task, an answer bot sees only the
//! image, and the two learn a shared symbol protocol.

pub mod checkpoint;
pub mod config;
pub mod dialog;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod nn;
pub mod play;
pub mod protocol;
pub mod rng;
pub mod run;
pub mod tabular;
pub mod train;
pub mod world;

pub use error::{EdlError, Result};
