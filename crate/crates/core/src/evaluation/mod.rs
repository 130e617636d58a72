//! Train/test regimes, hotspot ground truth, precision-recall scoring and
//! the hyperparameter sweep.

mod pr;
mod strategies;
mod sweep;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SampleDistribution;
use crate::error::{Error, Result};

pub use pr::{aggregate_pr, auc_pr, score_predictions, threshold_grid, PRPoint};
pub use strategies::{
    baseline_field, curves_from_scores, kmeans_curves, nn_curves, scores_from_field,
    topic_curves, topic_raw_field, CurveSet, EvalSettings, Strategy, TaxonScores,
};
pub use sweep::{run_sweep, BaselineScore, ConfigScore, SweepConfig, SweepReport};

pub const DEFAULT_HOTSPOTS: usize = 50;
pub const DEFAULT_TARGET_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRegime {
    /// Even-indexed samples train, odd-indexed samples test.
    Interleaved,
    /// The first half (rounded up) trains, the rest tests.
    Halves,
}

impl fmt::Display for SplitRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitRegime::Interleaved => "interleaved",
            SplitRegime::Halves => "halves",
        })
    }
}

impl FromStr for SplitRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interleaved" => Ok(SplitRegime::Interleaved),
            "halves" | "split" => Ok(SplitRegime::Halves),
            other => Err(Error::input(format!("unknown regime {other:?}"))),
        }
    }
}

/// Splits time-ordered samples into `(train, test)`.
pub fn split_samples<T: Clone>(samples: &[T], regime: SplitRegime) -> Result<(Vec<T>, Vec<T>)> {
    if samples.len() < 2 {
        return Err(Error::input("splitting needs at least two samples"));
    }
    Ok(match regime {
        SplitRegime::Interleaved => {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (i, s) in samples.iter().enumerate() {
                if i % 2 == 0 {
                    train.push(s.clone());
                } else {
                    test.push(s.clone());
                }
            }
            (train, test)
        }
        SplitRegime::Halves => {
            let cut = samples.len().div_ceil(2);
            (samples[..cut].to_vec(), samples[cut..].to_vec())
        }
    })
}

/// Ids of the `n` test samples with the highest relative abundance of
/// `v_star`; ties at the cutoff go to the earlier sample.
pub fn ground_truth_hotspots(test: &[SampleDistribution], v_star: usize, n: usize) -> BTreeSet<u64> {
    let abundance = |s: &SampleDistribution| s.rel_abundance().get(v_star).copied().unwrap_or(0.0);
    let mut order: Vec<usize> = (0..test.len()).collect();
    order.sort_by(|&a, &b| {
        abundance(&test[b])
            .total_cmp(&abundance(&test[a]))
            .then_with(|| {
                test[a]
                    .location
                    .time
                    .partial_cmp(&test[b].location.time)
                    .unwrap_or(Ordering::Equal)
            })
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(n)
        .map(|i| test[i].sample_id)
        .collect()
}

/// Independent stream seed for `stream` under a master seed (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
