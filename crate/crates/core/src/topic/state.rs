use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::{smoothed, Hyperparameters};
use crate::data::ObservationRecord;
use crate::error::{Error, Result};
use crate::grid::{CellKey, GridConfig};

/// Unnormalized CRP weights for one location: `counts[k] + alpha` for each
/// known community followed by `gamma` for a new one.
pub fn topic_proposal_weights(counts: &[u32], h: &Hyperparameters) -> Vec<f64> {
    counts
        .iter()
        .map(|&c| c as f64 + h.alpha)
        .chain(std::iter::once(h.gamma))
        .collect()
}

/// Gibbs sampler state: one community label per observation plus every
/// count the conditionals need.
///
/// Community ids are slots. A slot is live while at least one observation
/// carries its id; a freshly opened community takes the smallest free slot.
/// The state has a single writer; clone it to branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicState {
    grid: GridConfig,
    offsets: Vec<CellKey>,
    vocab_size: usize,
    taxa: Vec<usize>,
    cells: Vec<CellKey>,
    labels: Vec<usize>,
    topic_taxon_counts: Vec<Vec<u32>>,
    topic_totals: Vec<u32>,
    live: BTreeSet<usize>,
    cell_topic_counts: BTreeMap<CellKey, Vec<u32>>,
    rng_seed: u64,
}

impl TopicState {
    pub fn new(vocab_size: usize, grid: GridConfig, rng_seed: u64) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::input("vocabulary must contain at least one taxon"));
        }
        grid.validate()?;
        Ok(Self {
            grid,
            offsets: grid.neighborhood_offsets(),
            vocab_size,
            taxa: Vec::new(),
            cells: Vec::new(),
            labels: Vec::new(),
            topic_taxon_counts: Vec::new(),
            topic_totals: Vec::new(),
            live: BTreeSet::new(),
            cell_topic_counts: BTreeMap::new(),
            rng_seed,
        })
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn taxon(&self, i: usize) -> usize {
        self.taxa[i]
    }

    pub fn cell(&self, i: usize) -> CellKey {
        self.cells[i]
    }

    /// Live community ids, ascending.
    pub fn live_topics(&self) -> impl Iterator<Item = usize> + '_ {
        self.live.iter().copied()
    }

    pub fn num_topics(&self) -> usize {
        self.live.len()
    }

    pub fn topic_taxon_counts(&self, k: usize) -> &[u32] {
        &self.topic_taxon_counts[k]
    }

    pub fn topic_total(&self, k: usize) -> u32 {
        self.topic_totals.get(k).copied().unwrap_or(0)
    }

    /// Per-cell community counts, indexed by community slot. Vectors may be
    /// shorter than the slot count; missing entries are zero.
    pub fn cell_topic_counts(&self) -> &BTreeMap<CellKey, Vec<u32>> {
        &self.cell_topic_counts
    }

    pub fn cell_count(&self, cell: &CellKey, k: usize) -> u32 {
        self.cell_topic_counts
            .get(cell)
            .and_then(|v| v.get(k).copied())
            .unwrap_or(0)
    }

    /// Community counts summed over the neighborhood of `c`, one entry per
    /// live community in ascending id order.
    pub fn neighborhood_topic_counts(&self, c: CellKey) -> Vec<u32> {
        let by_slot = self.neighborhood_slot_counts(c);
        self.live.iter().map(|&k| by_slot[k]).collect()
    }

    fn neighborhood_slot_counts(&self, c: CellKey) -> Vec<u32> {
        let mut acc = vec![0u32; self.topic_totals.len()];
        for off in &self.offsets {
            if let Some(v) = self.cell_topic_counts.get(&c.offset(*off)) {
                for (a, &n) in acc.iter_mut().zip(v) {
                    *a += n;
                }
            }
        }
        acc
    }

    fn increment(&mut self, i: usize, k: usize) {
        if k >= self.topic_totals.len() {
            self.topic_totals.resize(k + 1, 0);
            self.topic_taxon_counts
                .resize_with(k + 1, || vec![0; self.vocab_size]);
        }
        self.labels[i] = k;
        self.topic_taxon_counts[k][self.taxa[i]] += 1;
        self.topic_totals[k] += 1;
        let cell = self.cell_topic_counts.entry(self.cells[i]).or_default();
        if cell.len() <= k {
            cell.resize(k + 1, 0);
        }
        cell[k] += 1;
        self.live.insert(k);
    }

    fn decrement(&mut self, i: usize) -> usize {
        let k = self.labels[i];
        self.topic_taxon_counts[k][self.taxa[i]] -= 1;
        self.topic_totals[k] -= 1;
        let cell = self
            .cell_topic_counts
            .get_mut(&self.cells[i])
            .expect("labeled observation has a cell entry");
        cell[k] -= 1;
        k
    }

    fn smallest_free_slot(&self) -> usize {
        (0..).find(|k| !self.live.contains(k)).unwrap()
    }

    /// Unnormalized full conditional for an observation of `taxon` at `cell`
    /// whose own contribution is already absent from the counts. Entries
    /// follow `live` order; the last entry is the new-community slot.
    fn conditional_weights(
        &self,
        taxon: usize,
        cell: CellKey,
        h: &Hyperparameters,
        new_topic_mass: f64,
    ) -> Vec<f64> {
        let nbr = self.neighborhood_slot_counts(cell);
        let mut w = Vec::with_capacity(self.live.len() + 1);
        for &k in &self.live {
            let phi = smoothed(
                self.topic_taxon_counts[k][taxon] as f64,
                self.topic_totals[k] as f64,
                h.beta,
                self.vocab_size,
            );
            w.push(phi * (nbr[k] as f64 + h.alpha));
        }
        // an empty community is uniform over taxa
        w.push(new_topic_mass / self.vocab_size as f64);
        w
    }

    /// Normalized conditional of observation `i` over `(live ids, new)`
    /// with `i` left out of the counts. The last entry is the probability of
    /// opening a new community.
    pub fn conditional(&self, i: usize, h: &Hyperparameters) -> (Vec<usize>, Vec<f64>) {
        let mut scratch = self.clone();
        scratch.decrement(i);
        let ids: Vec<usize> = scratch.live.iter().copied().collect();
        let w = scratch.conditional_weights(self.taxa[i], self.cells[i], h, h.gamma);
        let total: f64 = w.iter().sum();
        (ids, w.into_iter().map(|x| x / total).collect())
    }

    fn draw_and_assign<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        h: &Hyperparameters,
        new_topic_mass: f64,
        rng: &mut R,
    ) {
        let w = self.conditional_weights(self.taxa[i], self.cells[i], h, new_topic_mass);
        let pick = sample_index(&w, rng);
        let k = match self.live.iter().nth(pick) {
            Some(&k) => k,
            None => self.smallest_free_slot(),
        };
        self.increment(i, k);
    }

    /// Resamples the label of observation `i` from its full conditional.
    pub fn gibbs_resample<R: Rng + ?Sized>(&mut self, i: usize, h: &Hyperparameters, rng: &mut R) {
        self.resample_with_new_topic_mass(i, h, h.gamma, rng);
    }

    /// As [`Self::gibbs_resample`] with the new-community mass overridden.
    /// A mass of zero forbids opening communities.
    pub fn resample_with_new_topic_mass<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        h: &Hyperparameters,
        new_topic_mass: f64,
        rng: &mut R,
    ) {
        let old = self.decrement(i);
        self.draw_and_assign(i, h, new_topic_mass, rng);
        if self.topic_totals[old] == 0 {
            self.live.remove(&old);
        }
    }

    /// Adds a record and samples its initial label given the current state.
    pub fn push<R: Rng + ?Sized>(
        &mut self,
        record: &ObservationRecord,
        h: &Hyperparameters,
        rng: &mut R,
    ) -> Result<usize> {
        record.validate(self.vocab_size)?;
        let cell = self
            .grid
            .cell_of(record.time, record.easting, record.northing)?;
        let i = self.labels.len();
        self.taxa.push(record.taxon);
        self.cells.push(cell);
        self.labels.push(usize::MAX);
        self.draw_and_assign(i, h, h.gamma, rng);
        Ok(i)
    }

    /// Adds a record with a fixed label, bypassing the sampler.
    pub fn push_labeled(&mut self, record: &ObservationRecord, label: usize) -> Result<usize> {
        record.validate(self.vocab_size)?;
        let cell = self
            .grid
            .cell_of(record.time, record.easting, record.northing)?;
        let i = self.labels.len();
        self.taxa.push(record.taxon);
        self.cells.push(cell);
        self.labels.push(usize::MAX);
        self.increment(i, label);
        Ok(i)
    }

    /// Labels a new batch one observation at a time, then spends
    /// `refine_budget` resamples on uniformly chosen observations already in
    /// the state. `None` spends as many refinements as the batch has records.
    pub fn online_step<R: Rng + ?Sized>(
        &mut self,
        batch: &[ObservationRecord],
        h: &Hyperparameters,
        rng: &mut R,
        refine_budget: Option<usize>,
    ) -> Result<()> {
        h.validate()?;
        for r in batch {
            r.validate(self.vocab_size)?;
        }
        for r in batch {
            self.push(r, h, rng)?;
        }
        let budget = refine_budget.unwrap_or(batch.len());
        if self.is_empty() {
            return Ok(());
        }
        for _ in 0..budget {
            let i = rng.random_range(0..self.len());
            self.gibbs_resample(i, h, rng);
        }
        Ok(())
    }

    /// One in-order Gibbs pass over every observation.
    pub fn sweep<R: Rng + ?Sized>(&mut self, h: &Hyperparameters, rng: &mut R) {
        for i in 0..self.len() {
            self.gibbs_resample(i, h, rng);
        }
    }

    /// Sum over observations of the log unnormalized conditional mass of
    /// each current label, counts taken with the observation left out.
    pub fn log_joint(&self, h: &Hyperparameters) -> f64 {
        let mut total = 0.0;
        for i in 0..self.len() {
            let k = self.labels[i];
            let nbr: u32 = self
                .offsets
                .iter()
                .map(|o| self.cell_count(&self.cells[i].offset(*o), k))
                .sum();
            let phi = smoothed(
                (self.topic_taxon_counts[k][self.taxa[i]] - 1) as f64,
                (self.topic_totals[k] - 1) as f64,
                h.beta,
                self.vocab_size,
            );
            total += phi.ln() + ((nbr - 1) as f64 + h.alpha).ln();
        }
        total
    }

    /// Recounts everything from the labels and compares with the stored
    /// statistics.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let slots = self.topic_totals.len();
        let mut ttc = vec![vec![0u32; self.vocab_size]; slots];
        let mut totals = vec![0u32; slots];
        let mut cells: BTreeMap<CellKey, Vec<u32>> = BTreeMap::new();
        for i in 0..self.len() {
            let k = self.labels[i];
            if !self.live.contains(&k) {
                return Err(format!("observation {i} carries dead label {k}"));
            }
            ttc[k][self.taxa[i]] += 1;
            totals[k] += 1;
            let c = cells.entry(self.cells[i]).or_insert_with(|| vec![0; slots]);
            c[k] += 1;
        }
        if ttc != self.topic_taxon_counts {
            return Err("topic-taxon counts disagree with labels".into());
        }
        if totals != self.topic_totals {
            return Err("topic totals disagree with labels".into());
        }
        for (k, row) in self.topic_taxon_counts.iter().enumerate() {
            if row.iter().sum::<u32>() != self.topic_totals[k] {
                return Err(format!("row {k} does not sum to its total"));
            }
        }
        if self.topic_totals.iter().map(|&t| t as usize).sum::<usize>() != self.len() {
            return Err("topic totals do not sum to the observation count".into());
        }
        for &k in &self.live {
            if self.topic_totals[k] == 0 {
                return Err(format!("live community {k} is empty"));
            }
        }
        let nonzero = |v: &Vec<u32>| v.iter().any(|&n| n > 0);
        let stored: BTreeMap<_, _> = self
            .cell_topic_counts
            .iter()
            .filter(|(_, v)| nonzero(v))
            .collect();
        if stored.len() != cells.len() {
            return Err("occupied cell sets differ".into());
        }
        for (key, want) in &cells {
            let got = stored
                .get(key)
                .ok_or_else(|| format!("cell {key} missing"))?;
            for k in 0..slots {
                if got.get(k).copied().unwrap_or(0) != want[k] {
                    return Err(format!("cell {key} count for community {k} is wrong"));
                }
            }
        }
        Ok(())
    }

    /// Live communities in ascending id order, paired with their taxon
    /// counts.
    pub(crate) fn live_rows(&self) -> impl Iterator<Item = (usize, &[u32])> + '_ {
        self.live
            .iter()
            .map(|&k| (k, self.topic_taxon_counts[k].as_slice()))
    }
}

/// Draws an index with probability proportional to `weights`.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "all-zero weight vector");
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding left u past the last bucket; fall back to the last positive
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
