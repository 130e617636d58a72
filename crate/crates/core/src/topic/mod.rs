//! Bayesian nonparametric spatio-temporal community model.
//!
//! Observations are binned into cells ([`crate::grid`]). Each observation
//! carries a community label; a community is a Dirichlet-smoothed
//! distribution over taxa, and the prior over labels at a location is a
//! Chinese-restaurant-process variant driven by community counts in the
//! location's Von Neumann neighborhood. Labels are learned with an online
//! collapsed Gibbs sampler.

mod model;
mod state;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model::{batch_train, CellTopicField, CommunityMatrix, TrainOutput, TrainedModel};
pub(crate) use state::sample_index;
pub use state::{topic_proposal_weights, TopicState};

/// Community count a uniform start spreads labels over.
pub const DEFAULT_INIT_TOPICS: usize = 20;

/// How labels are assigned before the first full sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Initialization {
    /// One sequential pass of the sampler over the records in order.
    #[default]
    Online,
    /// Labels drawn uniformly from `0..topics`.
    Uniform { topics: usize },
}

impl Initialization {
    /// `0` selects the online pass, anything else a uniform start.
    pub fn from_topic_count(topics: usize) -> Self {
        if topics == 0 {
            Initialization::Online
        } else {
            Initialization::Uniform { topics }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Pseudo-count added to every known community's neighborhood count.
    pub alpha: f64,
    /// Symmetric Dirichlet concentration of community taxon distributions.
    pub beta: f64,
    /// Mass reserved for opening a new community.
    pub gamma: f64,
}

impl Hyperparameters {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let h = Self { alpha, beta, gamma };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::input(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            gamma: 1e-5,
        }
    }
}

/// Dirichlet posterior mean `(n + beta) / (total + dim * beta)`.
#[inline]
pub(crate) fn smoothed(n: f64, total: f64, beta: f64, dim: usize) -> f64 {
    (n + beta) / (total + dim as f64 * beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperparameters_must_be_positive() {
        assert!(Hyperparameters::new(0.1, 0.1, 1e-5).is_ok());
        assert!(Hyperparameters::new(0.0, 0.1, 1e-5).is_err());
        assert!(Hyperparameters::new(0.1, -1.0, 1e-5).is_err());
        assert!(Hyperparameters::new(0.1, 0.1, 0.0).is_err());
        assert!(Hyperparameters::new(f64::NAN, 0.1, 1e-5).is_err());
    }
}
