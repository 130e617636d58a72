//! Target-taxon probability fields, median smoothing and hotspot extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use crate::data::ObservationRecord;
use crate::error::{Error, Result};
use crate::grid::{CellKey, GridConfig};
use crate::topic::{CellTopicField, CommunityMatrix, TrainedModel};

/// A value in `[0, 1]` for every covered cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarField {
    values: BTreeMap<CellKey, f64>,
}

impl ScalarField {
    pub fn new(values: BTreeMap<CellKey, f64>) -> Result<Self> {
        if let Some((cell, v)) = values
            .iter()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::input(format!("value {v} at cell {cell} is outside [0, 1]")));
        }
        Ok(Self { values })
    }

    pub fn get(&self, cell: &CellKey) -> Option<f64> {
        self.values.get(cell).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &f64)> {
        self.values.iter()
    }

    pub fn covered_cells(&self) -> impl Iterator<Item = &CellKey> {
        self.values.keys()
    }

    pub fn values(&self) -> &BTreeMap<CellKey, f64> {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotspotConfig {
    /// Side of the median-filter square, meters.
    pub sigma_m: f64,
    pub tau: f64,
    pub target_taxon: usize,
}

impl HotspotConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_m.is_finite() && self.sigma_m >= 0.0) {
            return Err(Error::input(format!("sigma must be non-negative, got {}", self.sigma_m)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::input(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

fn check_target(model: &TrainedModel, v_star: usize) -> Result<()> {
    let v = model.vocab_size();
    if v < 2 {
        return Err(Error::input("holding out a taxon needs at least two taxa"));
    }
    if v_star >= v {
        return Err(Error::input(format!(
            "taxon id out of range: {v_star} (vocabulary has {v} taxa)"
        )));
    }
    Ok(())
}

/// Community-taxon matrix recomputed without `v_star`: its counts leave
/// both numerator and denominator and the prior spans `V - 1` taxa.
pub fn heldout_phi(model: &TrainedModel, v_star: usize) -> Result<CommunityMatrix> {
    check_target(model, v_star)?;
    let taxa = (0..model.vocab_size()).filter(|&v| v != v_star).collect();
    Ok(CommunityMatrix::from_counts(
        model
            .topic_taxon_counts
            .iter()
            .enumerate()
            .map(|(k, r)| (k, r.as_slice())),
        taxa,
        model.hyperparameters.beta,
    ))
}

/// Labels held-out test observations against the frozen training model and
/// returns the community mixture at every test cell.
///
/// Training counts never change. Each test label is drawn with weight
/// `phi_heldout[k][w] * (n_k(g(c)) + alpha)` where `n_k(g(c))` counts both
/// training labels and the other test labels in the neighborhood; no new
/// communities are opened. The returned mixture at a test cell is that same
/// neighborhood prior, normalized.
pub fn assign_test_topics<R: Rng + ?Sized>(
    model: &TrainedModel,
    test_records: &[ObservationRecord],
    v_star: usize,
    rng: &mut R,
    n_sweeps: usize,
) -> Result<CellTopicField> {
    check_target(model, v_star)?;
    let k = model.num_topics();
    if k == 0 {
        return Err(Error::input("model has no communities"));
    }
    let grid = model.grid;
    let mut cells = Vec::with_capacity(test_records.len());
    for r in test_records {
        r.validate(model.vocab_size())?;
        if r.taxon == v_star {
            return Err(Error::input(format!(
                "test data contains the held-out taxon {v_star}"
            )));
        }
        cells.push(grid.cell_of(r.time, r.easting, r.northing)?);
    }
    let alpha = model.hyperparameters.alpha;
    let phi = heldout_phi(model, v_star)?;
    let col: Vec<Option<usize>> = (0..model.vocab_size()).map(|v| phi.column_of(v)).collect();

    let offsets = grid.neighborhood_offsets();
    let mut train_nbr: HashMap<CellKey, Vec<f64>> = HashMap::new();
    for &c in &cells {
        train_nbr.entry(c).or_insert_with(|| {
            let mut acc = vec![alpha; k];
            for o in &offsets {
                if let Some(v) = model.cell_topic_counts.get(&c.offset(*o)) {
                    for (a, &n) in acc.iter_mut().zip(v) {
                        *a += n as f64;
                    }
                }
            }
            acc
        });
    }

    let mut test_counts: HashMap<CellKey, Vec<u32>> = HashMap::new();
    let mut labels = vec![0usize; test_records.len()];
    let mut weights = vec![0.0; k];

    let fill = |weights: &mut [f64], test_counts: &HashMap<CellKey, Vec<u32>>, i: usize| {
        let c = cells[i];
        let base = &train_nbr[&c];
        let w_col = col[test_records[i].taxon].expect("held-out taxon excluded above");
        weights.copy_from_slice(base);
        for o in &offsets {
            if let Some(v) = test_counts.get(&c.offset(*o)) {
                for (w, &n) in weights.iter_mut().zip(v) {
                    *w += n as f64;
                }
            }
        }
        for (w, row) in weights.iter_mut().zip(&phi.rows) {
            *w *= row[w_col];
        }
    };

    for i in 0..test_records.len() {
        fill(&mut weights, &test_counts, i);
        let z = crate::topic::sample_index(&weights, rng);
        labels[i] = z;
        test_counts.entry(cells[i]).or_insert_with(|| vec![0; k])[z] += 1;
    }
    for _ in 0..n_sweeps {
        for i in 0..test_records.len() {
            test_counts.get_mut(&cells[i]).unwrap()[labels[i]] -= 1;
            fill(&mut weights, &test_counts, i);
            let z = crate::topic::sample_index(&weights, rng);
            labels[i] = z;
            test_counts.get_mut(&cells[i]).unwrap()[z] += 1;
        }
    }

    let covered: BTreeSet<CellKey> = cells.iter().copied().collect();
    let mut theta = BTreeMap::new();
    for c in covered {
        let mut row = train_nbr[&c].clone();
        for o in &offsets {
            if let Some(v) = test_counts.get(&c.offset(*o)) {
                for (w, &n) in row.iter_mut().zip(v) {
                    *w += n as f64;
                }
            }
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= total);
        theta.insert(c, row);
    }
    Ok(CellTopicField {
        topic_ids: (0..k).collect(),
        theta,
    })
}

/// Probability of `v_star` at every cell of `theta_star`: the mixture
/// weights dotted with the target's column of the full matrix.
pub fn predict_target_field(
    theta_star: &CellTopicField,
    phi_full: &CommunityMatrix,
    v_star: usize,
) -> Result<ScalarField> {
    let column = phi_full
        .taxon_column(v_star)
        .ok_or_else(|| Error::input(format!("taxon id out of range: {v_star}")))?;
    let mut values = BTreeMap::new();
    for (cell, theta) in &theta_star.theta {
        if theta.len() != column.len() {
            return Err(Error::input(format!(
                "mixture at {cell} has {} communities, matrix has {}",
                theta.len(),
                column.len()
            )));
        }
        let p: f64 = theta.iter().zip(&column).map(|(t, p)| t * p).sum();
        values.insert(*cell, p.clamp(0.0, 1.0));
    }
    ScalarField::new(values)
}

/// Median of the covered cells whose centers fall inside the
/// axis-aligned square of side `sigma_m` centered on each cell. Cells are
/// only compared within the same temporal slice; uncovered cells are
/// skipped.
pub fn median_smooth(field: &ScalarField, sigma_m: f64, grid: &GridConfig) -> ScalarField {
    let half = sigma_m / 2.0;
    let mut reach = (half / grid.cell_size_m).floor().max(0.0) as i64;
    // floor may land one short or over through rounding
    while ((reach + 1) as f64) * grid.cell_size_m <= half {
        reach += 1;
    }
    while reach > 0 && (reach as f64) * grid.cell_size_m > half {
        reach -= 1;
    }
    if reach == 0 || field.is_empty() {
        return field.clone();
    }
    let side = (2 * reach + 1) as u128;
    let scan_all = side * side > field.len() as u128;

    let mut out = BTreeMap::new();
    let mut window = Vec::new();
    for (cell, _) in field.iter() {
        window.clear();
        if scan_all {
            window.extend(field.iter().filter_map(|(c, &v)| {
                (c.t_idx == cell.t_idx
                    && (c.e_idx - cell.e_idx).abs() <= reach
                    && (c.n_idx - cell.n_idx).abs() <= reach)
                    .then_some(v)
            }));
        } else {
            for de in -reach..=reach {
                for dn in -reach..=reach {
                    let c = CellKey::new(cell.t_idx, cell.e_idx + de, cell.n_idx + dn);
                    if let Some(v) = field.get(&c) {
                        window.push(v);
                    }
                }
            }
        }
        out.insert(*cell, median(&mut window));
    }
    ScalarField { values: out }
}

/// Median with the even case averaging the two middle values.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Cells whose value strictly exceeds `tau`.
pub fn extract_hotspots(field: &ScalarField, tau: f64) -> BTreeSet<CellKey> {
    field
        .iter()
        .filter(|(_, &v)| v > tau)
        .map(|(c, _)| *c)
        .collect()
}
