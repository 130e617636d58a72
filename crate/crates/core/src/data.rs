//! Observation records, per-sample taxon distributions and survey datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One classified detection at a spatio-temporal location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub taxon: usize,
    /// Seconds since mission start.
    pub time: f64,
    pub easting: f64,
    pub northing: f64,
    pub sample_id: u64,
}

impl ObservationRecord {
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.taxon >= vocab_size {
            return Err(Error::input(format!(
                "taxon id {} out of range (vocabulary has {vocab_size} taxa)",
                self.taxon
            )));
        }
        if !(self.time.is_finite() && self.easting.is_finite() && self.northing.is_finite()) {
            return Err(Error::input(format!(
                "non-finite location in sample {}",
                self.sample_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub time: f64,
    pub easting: f64,
    pub northing: f64,
}

/// Taxon counts of one water sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDistribution {
    pub sample_id: u64,
    pub location: Location,
    counts: Vec<u32>,
    rel_abundance: Vec<f64>,
}

impl SampleDistribution {
    pub fn new(sample_id: u64, location: Location, counts: Vec<u32>) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total == 0 {
            return Err(Error::input(format!("sample {sample_id} has no observations")));
        }
        let rel_abundance = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self {
            sample_id,
            location,
            counts,
            rel_abundance,
        })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn rel_abundance(&self) -> &[f64] {
        &self.rel_abundance
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Relative abundance with `v_star` removed and the rest renormalized.
    /// `None` when the sample contains nothing but `v_star`.
    pub fn masked(&self, v_star: usize) -> Option<Vec<f64>> {
        let rest: u64 = self
            .counts
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != v_star)
            .map(|(_, &c)| c as u64)
            .sum();
        if rest == 0 {
            return None;
        }
        Some(
            self.counts
                .iter()
                .enumerate()
                .filter(|&(v, _)| v != v_star)
                .map(|(_, &c)| c as f64 / rest as f64)
                .collect(),
        )
    }

    /// Expands counts into one record per detection, taxa in ascending order.
    pub fn records(&self) -> impl Iterator<Item = ObservationRecord> + '_ {
        let loc = self.location;
        let id = self.sample_id;
        self.counts.iter().enumerate().flat_map(move |(taxon, &c)| {
            (0..c).map(move |_| ObservationRecord {
                taxon,
                time: loc.time,
                easting: loc.easting,
                northing: loc.northing,
                sample_id: id,
            })
        })
    }
}

/// A time-ordered survey: the vocabulary, per-sample counts, and the
/// flattened detection records.
#[derive(Debug, Clone)]
pub struct SurveyDataset {
    pub vocab_names: Vec<String>,
    pub samples: Vec<SampleDistribution>,
    pub records: Vec<ObservationRecord>,
}

impl SurveyDataset {
    /// Sorts samples by time (stable) and expands the records.
    pub fn new(vocab_names: Vec<String>, mut samples: Vec<SampleDistribution>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("no samples"));
        }
        let v = vocab_names.len();
        if let Some(bad) = samples.iter().find(|s| s.vocab_size() != v) {
            return Err(Error::input(format!(
                "sample {} has {} taxa, vocabulary has {v}",
                bad.sample_id,
                bad.vocab_size()
            )));
        }
        samples.sort_by(|a, b| a.location.time.total_cmp(&b.location.time));
        let records = records_of(&samples);
        Ok(Self {
            vocab_names,
            samples,
            records,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_names.len()
    }

    /// Taxon ids ordered by total count, most frequent first (ties by id).
    pub fn taxa_by_frequency(&self) -> Vec<usize> {
        let mut totals = vec![0u64; self.vocab_size()];
        for s in &self.samples {
            for (v, &c) in s.counts().iter().enumerate() {
                totals[v] += c as u64;
            }
        }
        let mut ids: Vec<usize> = (0..totals.len()).collect();
        ids.sort_by(|&a, &b| totals[b].cmp(&totals[a]).then(a.cmp(&b)));
        ids
    }
}

pub fn records_of(samples: &[SampleDistribution]) -> Vec<ObservationRecord> {
    samples.iter().flat_map(|s| s.records()).collect()
}
