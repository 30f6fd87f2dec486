//! Simulation and verification toolkit for profiles of random weighted
//! b-ary trees.

pub mod error;
pub mod fixedpoint;
pub mod harness;
pub mod martingale;
pub mod normalize;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod spectral;
pub mod tree_sim;
pub mod weight_model;

pub use error::{Error, Result};
pub use par::Execution;
pub use weight_model::{preset, preset_default, WeightModel};
