use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::pr::{aggregate_pr, auc_pr, score_predictions, threshold_grid, PRPoint};
use super::{derive_seed, ground_truth_hotspots, DEFAULT_HOTSPOTS};
use crate::baselines::{kmeans_fit, CentroidSet, NearestNeighbor, DEFAULT_RESTARTS};
use crate::data::{ObservationRecord, SampleDistribution};
use crate::error::{Error, Result};
use crate::grid::{CellKey, GridConfig};
use crate::prediction::{assign_test_topics, median_smooth, predict_target_field, ScalarField};
use crate::topic::{Initialization, TrainedModel, DEFAULT_INIT_TOPICS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Topic,
    Nn,
    Kmeans,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Topic => "topic",
            Strategy::Nn => "nn",
            Strategy::Kmeans => "kmeans",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topic" => Ok(Strategy::Topic),
            "nn" => Ok(Strategy::Nn),
            "kmeans" => Ok(Strategy::Kmeans),
            other => Err(Error::input(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Knobs shared by every strategy evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub grid: GridConfig,
    pub train_sweeps: usize,
    pub test_sweeps: usize,
    pub kmeans_restarts: usize,
    pub n_hotspots: usize,
    pub init: Initialization,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            train_sweeps: 100,
            test_sweeps: 20,
            kmeans_restarts: DEFAULT_RESTARTS,
            n_hotspots: DEFAULT_HOTSPOTS,
            init: Initialization::Uniform {
                topics: DEFAULT_INIT_TOPICS,
            },
        }
    }
}

/// Per-sample scores for one held-out taxon together with its true
/// hotspots.
#[derive(Debug, Clone)]
pub struct TaxonScores {
    pub taxon: usize,
    pub scores: BTreeMap<u64, f64>,
    pub truth: BTreeSet<u64>,
}

impl TaxonScores {
    pub fn new(taxon: usize, scores: BTreeMap<u64, f64>, test: &[SampleDistribution], n_hotspots: usize) -> Self {
        Self {
            taxon,
            scores,
            truth: ground_truth_hotspots(test, taxon, n_hotspots),
        }
    }
}

/// Per-taxon and micro-aggregated precision-recall curves on one shared
/// threshold grid.
#[derive(Debug, Clone)]
pub struct CurveSet {
    pub thresholds: Vec<f64>,
    pub per_taxon: Vec<(usize, Vec<PRPoint>)>,
    pub aggregated: Vec<PRPoint>,
    pub auc: f64,
    pub per_taxon_auc: Vec<(usize, f64)>,
}

pub fn curves_from_scores(per_taxon: &[TaxonScores]) -> Result<CurveSet> {
    let thresholds = threshold_grid(per_taxon.iter().flat_map(|t| t.scores.values()));
    let mut curves = Vec::with_capacity(per_taxon.len());
    for t in per_taxon {
        curves.push((t.taxon, score_predictions(&t.scores, &t.truth, &thresholds)?));
    }
    let only: Vec<Vec<PRPoint>> = curves.iter().map(|(_, c)| c.clone()).collect();
    let aggregated = aggregate_pr(&only)?;
    let per_taxon_auc = curves.iter().map(|(v, c)| (*v, auc_pr(c))).collect();
    Ok(CurveSet {
        auc: auc_pr(&aggregated),
        thresholds,
        per_taxon: curves,
        aggregated,
        per_taxon_auc,
    })
}

fn heldout_records(test: &[SampleDistribution], v_star: usize) -> Vec<ObservationRecord> {
    test.iter()
        .flat_map(|s| s.records())
        .filter(|r| r.taxon != v_star)
        .collect()
}

/// Unsmoothed probability of `v_star` at every test cell, with every
/// `v_star` detection removed from the test data.
pub fn topic_raw_field(
    model: &TrainedModel,
    test: &[SampleDistribution],
    v_star: usize,
    test_sweeps: usize,
    seed: u64,
) -> Result<ScalarField> {
    let records = heldout_records(test, v_star);
    let mut rng = StdRng::seed_from_u64(seed);
    let theta = assign_test_topics(model, &records, v_star, &mut rng, test_sweeps)?;
    predict_target_field(&theta, &model.phi(), v_star)
}

/// Per-sample baseline predictions averaged into their cells.
pub fn baseline_field(
    predictions: impl IntoIterator<Item = (CellKey, f64)>,
) -> Result<ScalarField> {
    let mut acc: BTreeMap<CellKey, (f64, usize)> = BTreeMap::new();
    for (cell, p) in predictions {
        let e = acc.entry(cell).or_default();
        e.0 += p;
        e.1 += 1;
    }
    ScalarField::new(acc.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect())
}

/// Smooths the field and reads each test sample's cell. Samples in
/// uncovered cells score 0.
pub fn scores_from_field(
    field: &ScalarField,
    sigma_m: f64,
    grid: &GridConfig,
    test: &[SampleDistribution],
) -> Result<BTreeMap<u64, f64>> {
    let smoothed = median_smooth(field, sigma_m, grid);
    let mut out = BTreeMap::new();
    for s in test {
        let c = grid.cell_of(s.location.time, s.location.easting, s.location.northing)?;
        out.insert(s.sample_id, smoothed.get(&c).unwrap_or(0.0));
    }
    Ok(out)
}

fn sample_cells(test: &[SampleDistribution], grid: &GridConfig) -> Result<Vec<CellKey>> {
    test.iter()
        .map(|s| grid.cell_of(s.location.time, s.location.easting, s.location.northing))
        .collect()
}

pub fn topic_curves(
    model: &TrainedModel,
    test: &[SampleDistribution],
    targets: &[usize],
    sigma_m: f64,
    settings: &EvalSettings,
    seed: u64,
) -> Result<CurveSet> {
    let mut per_taxon = Vec::with_capacity(targets.len());
    for &v in targets {
        let field = topic_raw_field(model, test, v, settings.test_sweeps, derive_seed(seed, v as u64))?;
        let scores = scores_from_field(&field, sigma_m, &model.grid, test)?;
        per_taxon.push(TaxonScores::new(v, scores, test, settings.n_hotspots));
    }
    curves_from_scores(&per_taxon)
}

/// Unsmoothed nearest-neighbor field for one target.
pub(crate) fn nn_field(
    train: &[SampleDistribution],
    test: &[SampleDistribution],
    v_star: usize,
    grid: &GridConfig,
) -> Result<ScalarField> {
    let nn = NearestNeighbor::new(train, v_star)?;
    let cells = sample_cells(test, grid)?;
    baseline_field(cells.into_iter().zip(test.iter().map(|s| nn.predict(s))))
}

pub fn nn_curves(
    train: &[SampleDistribution],
    test: &[SampleDistribution],
    targets: &[usize],
    sigma_m: f64,
    settings: &EvalSettings,
) -> Result<CurveSet> {
    let mut per_taxon = Vec::with_capacity(targets.len());
    for &v in targets {
        let field = nn_field(train, test, v, &settings.grid)?;
        let scores = scores_from_field(&field, sigma_m, &settings.grid, test)?;
        per_taxon.push(TaxonScores::new(v, scores, test, settings.n_hotspots));
    }
    curves_from_scores(&per_taxon)
}

/// Unsmoothed k-means field for one target; `k` is clamped to the number
/// of usable training samples.
pub(crate) fn kmeans_field(
    train: &[SampleDistribution],
    test: &[SampleDistribution],
    v_star: usize,
    k: usize,
    settings: &EvalSettings,
    seed: u64,
) -> Result<ScalarField> {
    let usable = train.iter().filter(|s| s.masked(v_star).is_some()).count();
    let mut rng = StdRng::seed_from_u64(seed);
    let cs: CentroidSet = kmeans_fit(train, k.min(usable).max(1), v_star, &mut rng, settings.kmeans_restarts)?;
    let cells = sample_cells(test, &settings.grid)?;
    let preds = test.iter().map(|s| {
        let q = s.masked(v_star);
        cs.target_abundance[cs.nearest(q.as_deref())]
    });
    baseline_field(cells.into_iter().zip(preds))
}

pub fn kmeans_curves(
    train: &[SampleDistribution],
    test: &[SampleDistribution],
    targets: &[usize],
    k: usize,
    sigma_m: f64,
    settings: &EvalSettings,
    seed: u64,
) -> Result<CurveSet> {
    let mut per_taxon = Vec::with_capacity(targets.len());
    for &v in targets {
        let field = kmeans_field(train, test, v, k, settings, derive_seed(seed, v as u64))?;
        let scores = scores_from_field(&field, sigma_m, &settings.grid, test)?;
        per_taxon.push(TaxonScores::new(v, scores, test, settings.n_hotspots));
    }
    curves_from_scores(&per_taxon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Location;

    fn sample(id: u64, e: f64, counts: Vec<u32>) -> SampleDistribution {
        SampleDistribution::new(
            id,
            Location {
                time: id as f64,
                easting: e,
                northing: 0.0,
            },
            counts,
        )
        .unwrap()
    }

    #[test]
    fn baseline_field_averages_cells() {
        let f = baseline_field([
            (CellKey::new(0, 0, 0), 0.2),
            (CellKey::new(0, 0, 0), 0.4),
            (CellKey::new(0, 1, 0), 1.0),
        ])
        .unwrap();
        assert!((f.get(&CellKey::new(0, 0, 0)).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(f.get(&CellKey::new(0, 1, 0)), Some(1.0));
    }

    #[test]
    fn uncovered_samples_score_zero() {
        let grid = GridConfig::default();
        let f = baseline_field([(CellKey::new(0, 0, 0), 0.7)]).unwrap();
        let test = vec![sample(1, 100.0, vec![1, 1]), sample(2, 50_000.0, vec![1, 1])];
        let s = scores_from_field(&f, 0.0, &grid, &test).unwrap();
        assert_eq!(s[&1], 0.7);
        assert_eq!(s[&2], 0.0);
    }

    #[test]
    fn perfect_scores_give_unit_auc() {
        let test: Vec<_> = (0..10u64)
            .map(|i| sample(i, i as f64 * 5000.0, vec![i as u32 + 1, 10]))
            .collect();
        let scores = test
            .iter()
            .map(|s| (s.sample_id, s.rel_abundance()[0]))
            .collect();
        let ts = TaxonScores::new(0, scores, &test, 3);
        let c = curves_from_scores(&[ts]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.per_taxon_auc, vec![(0, 1.0)]);
    }

    #[test]
    fn strategy_names() {
        for s in [Strategy::Topic, Strategy::Nn, Strategy::Kmeans] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("knn".parse::<Strategy>().is_err());
    }
}
