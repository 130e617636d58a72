use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{smoothed, Hyperparameters, Initialization, TopicState};
use crate::data::ObservationRecord;
use crate::error::{Error, Result};
use crate::grid::{CellKey, GridConfig};

/// Community-by-taxon probabilities. Row `r` belongs to community
/// `topic_ids[r]`, column `c` to taxon `taxa[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityMatrix {
    pub topic_ids: Vec<usize>,
    pub taxa: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl CommunityMatrix {
    /// Smoothed rows over the given taxa. Each row's denominator counts only
    /// the listed taxa.
    pub(crate) fn from_counts<'a>(
        rows: impl Iterator<Item = (usize, &'a [u32])>,
        taxa: Vec<usize>,
        beta: f64,
    ) -> Self {
        let mut topic_ids = Vec::new();
        let mut out = Vec::new();
        for (k, counts) in rows {
            let total: u64 = taxa.iter().map(|&v| counts[v] as u64).sum();
            out.push(
                taxa.iter()
                    .map(|&v| smoothed(counts[v] as f64, total as f64, beta, taxa.len()))
                    .collect(),
            );
            topic_ids.push(k);
        }
        Self {
            topic_ids,
            taxa,
            rows: out,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.rows.len()
    }

    pub fn column_of(&self, taxon: usize) -> Option<usize> {
        self.taxa.iter().position(|&v| v == taxon)
    }

    /// Probability of `taxon` under every community, in row order.
    pub fn taxon_column(&self, taxon: usize) -> Option<Vec<f64>> {
        let c = self.column_of(taxon)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }
}

/// Per-cell community mixtures, vectors aligned with `topic_ids`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellTopicField {
    pub topic_ids: Vec<usize>,
    pub theta: BTreeMap<CellKey, Vec<f64>>,
}

impl CellTopicField {
    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn get(&self, cell: &CellKey) -> Option<&[f64]> {
        self.theta.get(cell).map(Vec::as_slice)
    }
}

impl TopicState {
    /// Smoothed community-taxon matrix of the live communities.
    pub fn phi_posterior(&self, h: &Hyperparameters) -> CommunityMatrix {
        CommunityMatrix::from_counts(self.live_rows(), (0..self.vocab_size()).collect(), h.beta)
    }

    /// Each cell's own community counts, smoothed by `alpha` and normalized.
    pub fn cell_topic_field(&self, h: &Hyperparameters) -> CellTopicField {
        let ids: Vec<usize> = self.live_topics().collect();
        let k = ids.len() as f64;
        let mut theta = BTreeMap::new();
        for (cell, counts) in self.cell_topic_counts() {
            let row: Vec<f64> = ids
                .iter()
                .map(|&id| counts.get(id).copied().unwrap_or(0) as f64)
                .collect();
            let total: f64 = row.iter().sum();
            if total == 0.0 {
                continue;
            }
            theta.insert(
                *cell,
                row.iter().map(|n| (n + h.alpha) / (total + k * h.alpha)).collect(),
            );
        }
        CellTopicField {
            topic_ids: ids,
            theta,
        }
    }

    /// Freezes the sufficient statistics with communities renumbered
    /// `0..K` in ascending id order.
    pub fn freeze(&self, h: Hyperparameters, vocab_names: Vec<String>) -> Result<TrainedModel> {
        if vocab_names.len() != self.vocab_size() {
            return Err(Error::input(format!(
                "{} vocabulary names for {} taxa",
                vocab_names.len(),
                self.vocab_size()
            )));
        }
        let ids: Vec<usize> = self.live_topics().collect();
        let topic_taxon_counts = ids
            .iter()
            .map(|&k| self.topic_taxon_counts(k).to_vec())
            .collect();
        let cell_topic_counts = self
            .cell_topic_counts()
            .iter()
            .filter(|(_, v)| v.iter().any(|&n| n > 0))
            .map(|(cell, v)| {
                let row = ids.iter().map(|&k| v.get(k).copied().unwrap_or(0)).collect();
                (*cell, row)
            })
            .collect();
        Ok(TrainedModel {
            grid: *self.grid(),
            hyperparameters: h,
            vocab_names,
            topic_taxon_counts,
            cell_topic_counts,
            rng_seed: self.rng_seed(),
            n_observations: self.len() as u64,
        })
    }
}

/// Frozen training statistics: everything prediction needs and everything a
/// model snapshot stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub grid: GridConfig,
    pub hyperparameters: Hyperparameters,
    pub vocab_names: Vec<String>,
    /// K rows of per-taxon counts.
    pub topic_taxon_counts: Vec<Vec<u32>>,
    /// Length-K community counts per occupied cell.
    pub cell_topic_counts: BTreeMap<CellKey, Vec<u32>>,
    pub rng_seed: u64,
    pub n_observations: u64,
}

impl TrainedModel {
    pub fn vocab_size(&self) -> usize {
        self.vocab_names.len()
    }

    pub fn num_topics(&self) -> usize {
        self.topic_taxon_counts.len()
    }

    pub fn topic_totals(&self) -> Vec<u64> {
        self.topic_taxon_counts
            .iter()
            .map(|r| r.iter().map(|&n| n as u64).sum())
            .collect()
    }

    pub fn phi(&self) -> CommunityMatrix {
        CommunityMatrix::from_counts(
            self.topic_taxon_counts
                .iter()
                .enumerate()
                .map(|(k, r)| (k, r.as_slice())),
            (0..self.vocab_size()).collect(),
            self.hyperparameters.beta,
        )
    }

    /// Structural consistency of a model that did not come from a sampler.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.hyperparameters.validate()?;
        let v = self.vocab_size();
        let k = self.num_topics();
        if v == 0 {
            return Err(Error::Snapshot("empty vocabulary".into()));
        }
        if let Some(r) = self.topic_taxon_counts.iter().find(|r| r.len() != v) {
            return Err(Error::Snapshot(format!(
                "community row has {} taxa, vocabulary has {v}",
                r.len()
            )));
        }
        if let Some((cell, _)) = self.cell_topic_counts.iter().find(|(_, c)| c.len() != k) {
            return Err(Error::Snapshot(format!(
                "cell {cell} has the wrong number of communities"
            )));
        }
        let total: u64 = self.topic_totals().iter().sum();
        let cell_total: u64 = self
            .cell_topic_counts
            .values()
            .flat_map(|c| c.iter().map(|&n| n as u64))
            .sum();
        if total != self.n_observations || cell_total != self.n_observations {
            return Err(Error::Snapshot(format!(
                "counts sum to {total}/{cell_total}, expected {} observations",
                self.n_observations
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub state: TopicState,
    pub phi: CommunityMatrix,
    pub theta: CellTopicField,
}

/// Offline training: one sequential online pass to initialize labels, then
/// `n_sweeps` full Gibbs sweeps. All randomness comes from `seed`.
pub fn batch_train(
    records: &[ObservationRecord],
    vocab_size: usize,
    h: &Hyperparameters,
    grid: GridConfig,
    n_sweeps: usize,
    init: Initialization,
    seed: u64,
) -> Result<TrainOutput> {
    if records.is_empty() {
        return Err(Error::input("cannot train on an empty record list"));
    }
    if n_sweeps == 0 {
        return Err(Error::input("n_sweeps must be at least 1"));
    }
    h.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut state = TopicState::new(vocab_size, grid, seed)?;
    match init {
        Initialization::Online => {
            state.online_step(records, h, &mut rng, Some(0))?;
        }
        Initialization::Uniform { topics } => {
            if topics == 0 {
                return Err(Error::input("a uniform start needs at least one community"));
            }
            for r in records {
                let k = rng.random_range(0..topics);
                state.push_labeled(r, k)?;
            }
        }
    }
    for _ in 0..n_sweeps {
        state.sweep(h, &mut rng);
    }
    let phi = state.phi_posterior(h);
    let theta = state.cell_topic_field(h);
    Ok(TrainOutput { state, phi, theta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(taxon: usize, e: f64) -> ObservationRecord {
        ObservationRecord {
            taxon,
            time: 0.0,
            easting: e,
            northing: 0.0,
            sample_id: 0,
        }
    }

    #[test]
    fn uniform_phi_without_counts() {
        let m = CommunityMatrix::from_counts(
            std::iter::once((0usize, &[0u32; 47][..])),
            (0..47).collect(),
            0.3,
        );
        for &p in &m.rows[0] {
            assert!((p - 1.0 / 47.0).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_direct_substitution() {
        // V=10, beta=1, N_k^(v)=9, N_k=91
        let mut row = [0u32; 10];
        row[0] = 9;
        row[1] = 82;
        let m = CommunityMatrix::from_counts(std::iter::once((0usize, &row[..])), (0..10).collect(), 1.0);
        assert!((m.rows[0][0] - 10.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn large_beta_tends_to_uniform() {
        let row = [100u32, 0, 3, 50];
        let m = CommunityMatrix::from_counts(std::iter::once((0usize, &row[..])), (0..4).collect(), 1e9);
        for &p in &m.rows[0] {
            assert!((p - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn single_record_training() {
        let h = Hyperparameters::new(0.5, 1.0, 1e-3).unwrap();
        let out = batch_train(&[rec(1, 0.0)], 3, &h, GridConfig::default(), 1, Initialization::Online, 4).unwrap();
        assert_eq!(out.phi.num_topics(), 1);
        let want = [1.0 / 4.0, 2.0 / 4.0, 1.0 / 4.0];
        for (p, w) in out.phi.rows[0].iter().zip(want) {
            assert!((p - w).abs() < 1e-15);
        }
        let theta = out.theta.get(&CellKey::new(0, 0, 0)).unwrap();
        assert_eq!(theta, &[1.0]);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let h = Hyperparameters::default();
        assert!(batch_train(&[], 3, &h, GridConfig::default(), 1, Initialization::Online, 0).is_err());
        assert!(batch_train(&[rec(0, 0.0)], 3, &h, GridConfig::default(), 0, Initialization::Online, 0).is_err());
    }

    #[test]
    fn frozen_model_is_consistent() {
        let h = Hyperparameters::new(0.1, 0.1, 0.5).unwrap();
        let recs: Vec<_> = (0..60).map(|i| rec(i % 4, (i * 1500) as f64)).collect();
        let out = batch_train(&recs, 4, &h, GridConfig::default(), 5, Initialization::Online, 11).unwrap();
        let names = (0..4).map(|v| format!("t{v}")).collect();
        let m = out.state.freeze(h, names).unwrap();
        m.validate().unwrap();
        assert_eq!(m.num_topics(), out.state.num_topics());
        assert_eq!(m.phi().rows, out.phi.rows);
    }
}
