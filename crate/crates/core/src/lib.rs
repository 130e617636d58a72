//! Hotspot prediction for sparsely observed taxa with a spatio-temporal
//! community topic model, plus the nearest-neighbor and k-means baselines
//! and the precision-recall harness used to compare them.

pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod io;
pub mod prediction;
pub mod synth;
pub mod topic;

pub use error::{Error, Result};
