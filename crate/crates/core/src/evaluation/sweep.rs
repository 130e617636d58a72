use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::strategies::{
    curves_from_scores, kmeans_field, nn_field, scores_from_field, topic_raw_field, CurveSet,
    EvalSettings, Strategy, TaxonScores,
};
use super::{derive_seed, split_samples, SplitRegime, DEFAULT_HOTSPOTS};
use crate::data::{records_of, SurveyDataset};
use crate::error::{Error, Result};
use crate::prediction::ScalarField;
use crate::topic::{batch_train, Hyperparameters};

fn default_hotspots() -> usize {
    DEFAULT_HOTSPOTS
}

/// Hyperparameter grid and evaluation targets of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Median-filter square sides, meters.
    pub sigmas: Vec<f64>,
    #[serde(default = "default_hotspots")]
    pub n_hotspots: usize,
    #[serde(default)]
    pub target_taxa: Vec<usize>,
}

impl SweepConfig {
    /// The grid searched for the cruise data, with the given targets.
    pub fn standard(target_taxa: Vec<usize>) -> Self {
        Self {
            alphas: vec![0.001, 0.01, 0.1, 0.5, 1.0],
            betas: vec![0.001, 0.01, 0.1, 0.5, 1.0],
            gammas: vec![1e-6, 1e-5, 1e-4],
            sigmas: vec![0.0, 15_000.0, 25_000.0, 35_000.0],
            n_hotspots: DEFAULT_HOTSPOTS,
            target_taxa,
        }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        for (name, list) in [("alphas", &self.alphas), ("betas", &self.betas), ("gammas", &self.gammas)] {
            if list.is_empty() || list.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::input(format!("{name} must be a nonempty list of positive values")));
            }
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::input("sigmas must be a nonempty list of non-negative values"));
        }
        if self.n_hotspots == 0 {
            return Err(Error::input("n_hotspots must be at least 1"));
        }
        if self.target_taxa.is_empty() {
            return Err(Error::input("no target taxa"));
        }
        if let Some(v) = self.target_taxa.iter().find(|&&v| v >= vocab_size) {
            return Err(Error::input(format!(
                "taxon id out of range: {v} (vocabulary has {vocab_size} taxa)"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alphas.len() * self.betas.len() * self.gammas.len() * self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigScore {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    #[serde(rename = "K_learned")]
    pub k_learned: usize,
    pub auc: f64,
    pub per_taxon_auc: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineScore {
    pub strategy: Strategy,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub auc: f64,
    pub per_taxon_auc: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub regime: SplitRegime,
    pub per_config: Vec<ConfigScore>,
    pub best: ConfigScore,
    pub baselines: Vec<BaselineScore>,
    pub best_baselines: Vec<BaselineScore>,
    /// Curves of the best topic configuration and best baseline settings.
    #[serde(skip)]
    pub best_curves: Vec<(Strategy, CurveSet)>,
}

fn named_auc(curves: &CurveSet, names: &[String]) -> BTreeMap<String, f64> {
    curves
        .per_taxon_auc
        .iter()
        .map(|&(v, a)| (names[v].clone(), a))
        .collect()
}

/// Indices of the configurations a budget allows, ascending. Without a
/// budget (or with one at least the grid size) every configuration runs.
fn selected_configs(total: usize, budget: Option<usize>, seed: u64) -> Vec<usize> {
    match budget {
        Some(b) if b < total => {
            let mut rng = StdRng::seed_from_u64(derive_seed(seed, u64::MAX));
            let mut picked = rand::seq::index::sample(&mut rng, total, b.max(1)).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..total).collect(),
    }
}

fn sigma_sweep(
    fields: &[(usize, ScalarField)],
    sigmas: &[f64],
    settings: &EvalSettings,
    grid: &crate::grid::GridConfig,
    test: &[crate::data::SampleDistribution],
) -> Result<Vec<(f64, CurveSet)>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let per_taxon = fields
                .iter()
                .map(|(v, f)| {
                    Ok(TaxonScores::new(
                        *v,
                        scores_from_field(f, sigma, grid, test)?,
                        test,
                        settings.n_hotspots,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((sigma, curves_from_scores(&per_taxon)?))
        })
        .collect()
}

/// Trains one topic model per `(alpha, beta, gamma)`, scores every
/// `sigma`, and picks the configuration with the largest aggregated
/// AUC-PR. Baselines in `strategies` are scored over the same `sigma`
/// values; k-means uses the community count of the best topic model.
/// Configurations run in parallel, each with its own seed stream, so the
/// report depends only on the inputs and `seed`.
pub fn run_sweep(
    dataset: &SurveyDataset,
    regime: SplitRegime,
    sweep: &SweepConfig,
    settings: &EvalSettings,
    strategies: &[Strategy],
    seed: u64,
    budget: Option<usize>,
) -> Result<SweepReport> {
    sweep.validate(dataset.vocab_size())?;
    let settings = EvalSettings {
        n_hotspots: sweep.n_hotspots,
        ..*settings
    };
    let (train, test) = split_samples(&dataset.samples, regime)?;
    let train_records = records_of(&train);
    let names = &dataset.vocab_names;
    let targets = &sweep.target_taxa;

    let n_sigma = sweep.sigmas.len();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for idx in selected_configs(sweep.len(), budget, seed) {
        groups.entry(idx / n_sigma).or_default().push(idx % n_sigma);
    }
    let n_b = sweep.betas.len();
    let n_g = sweep.gammas.len();

    let scored: Vec<Vec<(ConfigScore, CurveSet)>> = groups
        .par_iter()
        .map(|(&g, sigma_idx)| {
            let h = Hyperparameters::new(
                sweep.alphas[g / (n_b * n_g)],
                sweep.betas[(g / n_g) % n_b],
                sweep.gammas[g % n_g],
            )?;
            let train_seed = derive_seed(seed, g as u64);
            let out = batch_train(
                &train_records,
                dataset.vocab_size(),
                &h,
                settings.grid,
                settings.train_sweeps,
                settings.init,
                train_seed,
            )?;
            let model = out.state.freeze(h, names.clone())?;
            let fields = targets
                .iter()
                .map(|&v| {
                    topic_raw_field(&model, &test, v, settings.test_sweeps, derive_seed(train_seed, v as u64))
                        .map(|f| (v, f))
                })
                .collect::<Result<Vec<_>>>()?;
            let sigmas: Vec<f64> = sigma_idx.iter().map(|&s| sweep.sigmas[s]).collect();
            Ok(sigma_sweep(&fields, &sigmas, &settings, &model.grid, &test)?
                .into_iter()
                .map(|(sigma, curves)| {
                    let score = ConfigScore {
                        alpha: h.alpha,
                        beta: h.beta,
                        gamma: h.gamma,
                        sigma,
                        k_learned: model.num_topics(),
                        auc: curves.auc,
                        per_taxon_auc: named_auc(&curves, names),
                    };
                    (score, curves)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let scored: Vec<(ConfigScore, CurveSet)> = scored.into_iter().flatten().collect();
    let best_idx = argmax(scored.iter().map(|(s, _)| s.auc));
    let best = scored[best_idx].0.clone();
    let mut best_curves = vec![(Strategy::Topic, scored[best_idx].1.clone())];
    let per_config = scored.into_iter().map(|(s, _)| s).collect();

    let mut baselines = Vec::new();
    let mut best_baselines = Vec::new();
    for &strategy in strategies {
        let (fields, k) = match strategy {
            Strategy::Topic => continue,
            Strategy::Nn => (
                targets
                    .iter()
                    .map(|&v| nn_field(&train, &test, v, &settings.grid).map(|f| (v, f)))
                    .collect::<Result<Vec<_>>>()?,
                None,
            ),
            Strategy::Kmeans => (
                targets
                    .iter()
                    .map(|&v| {
                        kmeans_field(&train, &test, v, best.k_learned, &settings, derive_seed(seed ^ 0x6b6d, v as u64))
                            .map(|f| (v, f))
                    })
                    .collect::<Result<Vec<_>>>()?,
                Some(best.k_learned),
            ),
        };
        let runs = sigma_sweep(&fields, &sweep.sigmas, &settings, &settings.grid, &test)?;
        let start = baselines.len();
        for (sigma, curves) in &runs {
            baselines.push(BaselineScore {
                strategy,
                sigma: *sigma,
                k,
                auc: curves.auc,
                per_taxon_auc: named_auc(curves, names),
            });
        }
        let b = argmax(runs.iter().map(|(_, c)| c.auc));
        best_baselines.push(baselines[start + b].clone());
        best_curves.push((strategy, runs[b].1.clone()));
    }

    Ok(SweepReport {
        regime,
        per_config,
        best,
        baselines,
        best_baselines,
        best_curves,
    })
}

/// First index of the largest value.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_values() {
        let g = SweepConfig::standard(vec![0]);
        assert_eq!(g.alphas, vec![0.001, 0.01, 0.1, 0.5, 1.0]);
        assert_eq!(g.betas, vec![0.001, 0.01, 0.1, 0.5, 1.0]);
        assert_eq!(g.gammas, vec![1e-6, 1e-5, 1e-4]);
        assert_eq!(g.n_hotspots, 50);
        g.validate(1).unwrap();
        assert!(g.validate(0).is_err());
    }

    #[test]
    fn budget_subsamples_deterministically() {
        assert_eq!(selected_configs(5, None, 1), vec![0, 1, 2, 3, 4]);
        assert_eq!(selected_configs(5, Some(10), 1), vec![0, 1, 2, 3, 4]);
        let a = selected_configs(100, Some(7), 3);
        assert_eq!(a.len(), 7);
        assert_eq!(a, selected_configs(100, Some(7), 3));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax([0.1, 0.5, 0.5].into_iter()), 1);
        assert_eq!(argmax(std::iter::once(0.0)), 0);
    }

    #[test]
    fn sweep_config_json_defaults() {
        let c: SweepConfig =
            serde_json::from_str(r#"{"alphas":[0.1],"betas":[0.1],"gammas":[1e-5],"sigmas":[0]}"#).unwrap();
        assert_eq!(c.n_hotspots, 50);
        assert!(c.target_taxa.is_empty());
        assert!(c.validate(3).is_err());
    }
}
