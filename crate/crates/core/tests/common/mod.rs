//! Independent reference implementations used as test oracles. Nothing here
//! reuses the library's counting or search code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hotspot_core::data::{Location, ObservationRecord, SampleDistribution};
use hotspot_core::grid::{CellKey, GridConfig};
use hotspot_core::prediction::ScalarField;
use hotspot_core::topic::{Hyperparameters, TopicState};
use rand::rngs::StdRng;
use rand::Rng;

pub fn record(taxon: usize, easting: f64, northing: f64) -> ObservationRecord {
    ObservationRecord {
        taxon,
        time: 0.0,
        easting,
        northing,
        sample_id: 0,
    }
}

/// Records scattered over a `span x span` block of default-sized cells.
pub fn random_records(rng: &mut StdRng, n: usize, vocab: usize, span: i64) -> Vec<ObservationRecord> {
    let cell = GridConfig::default().cell_size_m;
    (0..n)
        .map(|_| {
            let e = rng.random_range(0..span) as f64 * cell + 10.0;
            let nn = rng.random_range(0..span) as f64 * cell + 10.0;
            record(rng.random_range(0..vocab), e, nn)
        })
        .collect()
}

/// A state whose labels are drawn uniformly from `0..k`.
pub fn random_state(rng: &mut StdRng, n: usize, vocab: usize, k: usize, span: i64) -> TopicState {
    let mut state = TopicState::new(vocab, GridConfig::default(), 0).unwrap();
    for r in random_records(rng, n, vocab, span) {
        let label = rng.random_range(0..k);
        state.push_labeled(&r, label).unwrap();
    }
    state
}

fn von_neumann(a: CellKey, b: CellKey, depth: i64) -> bool {
    (a.t_idx - b.t_idx).abs() + (a.e_idx - b.e_idx).abs() + (a.n_idx - b.n_idx).abs() <= depth
}

/// Unnormalized conditional of observation `i`, rebuilt from the labels
/// alone. Returns (label, weight) pairs: every label carried by any
/// observation, then the smallest unused id for a new community.
pub fn brute_conditional(state: &TopicState, i: usize, h: &Hyperparameters) -> Vec<(usize, f64)> {
    let n = state.len();
    let v = state.vocab_size() as f64;
    let depth = state.grid().neighborhood_depth as i64;
    let labels = state.labels();
    let ids: BTreeSet<usize> = labels.iter().copied().collect();
    let (w, c) = (state.taxon(i), state.cell(i));
    let mut out = Vec::new();
    for &k in &ids {
        let mut same_taxon = 0.0;
        let mut total = 0.0;
        let mut nbr = 0.0;
        for j in (0..n).filter(|&j| j != i && labels[j] == k) {
            total += 1.0;
            if state.taxon(j) == w {
                same_taxon += 1.0;
            }
            if von_neumann(state.cell(j), c, depth) {
                nbr += 1.0;
            }
        }
        let phi = (same_taxon + h.beta) / (total + v * h.beta);
        out.push((k, phi * (nbr + h.alpha)));
    }
    let fresh = (0..).find(|k| !ids.contains(k)).unwrap();
    out.push((fresh, h.gamma / v));
    out
}

pub fn normalize(w: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let total: f64 = w.iter().map(|p| p.1).sum();
    w.iter().map(|&(k, x)| (k, x / total)).collect()
}

/// Sum over observations of the log unnormalized conditional mass of the
/// current label.
pub fn brute_log_joint(state: &TopicState, h: &Hyperparameters) -> f64 {
    (0..state.len())
        .map(|i| {
            let k = state.labels()[i];
            let w = brute_conditional(state, i, h);
            w.iter().find(|p| p.0 == k).unwrap().1.ln()
        })
        .sum()
}

/// Collect-and-sort median over covered cells whose centers fall in the
/// sigma-square around each cell, same time slice.
pub fn brute_median(field: &ScalarField, sigma: f64, grid: &GridConfig) -> BTreeMap<CellKey, f64> {
    let half = sigma / 2.0;
    let center = |c: &CellKey| {
        (
            (c.e_idx as f64 + 0.5) * grid.cell_size_m,
            (c.n_idx as f64 + 0.5) * grid.cell_size_m,
        )
    };
    field
        .iter()
        .map(|(c, _)| {
            let (x, y) = center(c);
            let mut window: Vec<f64> = field
                .iter()
                .filter(|(d, _)| {
                    let (dx, dy) = center(d);
                    d.t_idx == c.t_idx && (dx - x).abs() <= half && (dy - y).abs() <= half
                })
                .map(|(_, &v)| v)
                .collect();
            window.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = window.len();
            let med = if m % 2 == 1 {
                window[m / 2]
            } else {
                (window[m / 2 - 1] + window[m / 2]) / 2.0
            };
            (*c, med)
        })
        .collect()
}

pub fn sample(id: u64, time: f64, counts: Vec<u32>) -> SampleDistribution {
    SampleDistribution::new(
        id,
        Location {
            time,
            easting: 0.0,
            northing: 0.0,
        },
        counts,
    )
    .unwrap()
}

/// Samples with random counts and distinct times. Some samples may hold
/// only a single taxon.
pub fn random_samples(rng: &mut StdRng, n: usize, vocab: usize, first_id: u64) -> Vec<SampleDistribution> {
    (0..n)
        .map(|i| {
            let mut counts: Vec<u32> = (0..vocab).map(|_| rng.random_range(0..4)).collect();
            if counts.iter().all(|&c| c == 0) {
                counts[rng.random_range(0..vocab)] = 1;
            }
            let id = first_id + i as u64;
            sample(id, id as f64, counts)
        })
        .collect()
}

fn masked_unit(s: &SampleDistribution, v_star: usize) -> Option<Vec<f64>> {
    let rest: f64 = s
        .counts()
        .iter()
        .enumerate()
        .filter(|&(v, _)| v != v_star)
        .map(|(_, &c)| c as f64)
        .sum();
    if rest == 0.0 {
        return None;
    }
    Some(
        s.counts()
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != v_star)
            .map(|(_, &c)| c as f64 / rest)
            .collect(),
    )
}

/// Full scan over the training set; ties go to the earliest time.
pub fn brute_nn(train: &[SampleDistribution], test: &SampleDistribution, v_star: usize) -> f64 {
    let q = masked_unit(test, v_star);
    let mut best: Option<(f64, f64, f64)> = None;
    for s in train {
        let Some(p) = masked_unit(s, v_star) else {
            continue;
        };
        let d = match &q {
            Some(q) => q.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
            None => f64::INFINITY,
        };
        let target = s.counts()[v_star] as f64 / s.total() as f64;
        let better = match best {
            None => true,
            Some((bd, bt, _)) => d < bd || (d == bd && s.location.time < bt),
        };
        if better {
            best = Some((d, s.location.time, target));
        }
    }
    best.unwrap().2
}
