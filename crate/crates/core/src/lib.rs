pub mod baseline_mlp;
pub mod dynamics;
pub mod encoder;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod hrr_world;
pub mod hypervector;
pub mod training;

pub use error::{HoloError, Result};
