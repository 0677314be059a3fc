//! Vertical-modeling competing-risks estimation with an optional cure
//! fraction.

pub mod cli;
pub mod config;
pub mod data;
pub mod em;
pub mod error;
pub mod glm;
pub mod latency;
pub mod linalg;
pub mod predict;
pub mod relhaz;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod variance;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Baseline = latency::BaselineHazard<f64>;
