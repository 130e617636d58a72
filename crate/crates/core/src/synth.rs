//! Synthetic surveys drawn from the community model's own generative
//! story, with the ground truth kept for recovery tests.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{Location, SampleDistribution, SurveyDataset};
use crate::error::{Error, Result};

/// Distance between consecutive cells along the synthetic track.
pub const TRACK_STEP_M: f64 = 5000.0;
/// Time between consecutive samples along the synthetic track.
pub const TRACK_STEP_S: f64 = 1200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_communities: usize,
    pub vocab_size: usize,
    pub n_cells: usize,
    pub obs_per_cell: u32,
    /// Symmetric Dirichlet parameter of community taxon distributions.
    pub phi_concentration: f64,
    /// Symmetric Dirichlet parameter of per-cell community mixtures.
    pub theta_concentration: f64,
    /// Weight in `[0, 1]` given to the mean of a cell's track neighbors.
    pub spatial_smoothness: f64,
    pub seed: u64,
    /// When set, cells in the second half of the track draw their mixtures
    /// with this concentration instead, so the two halves follow different
    /// community regimes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_half_theta_concentration: Option<f64>,
}

impl SynthSpec {
    /// Five well-separated communities over twenty taxa, 200 cells of 100
    /// detections each, with sparse mixtures on the first half of the track
    /// and dense ones on the second.
    pub fn standard(seed: u64) -> Self {
        Self {
            n_communities: 5,
            vocab_size: 20,
            n_cells: 200,
            obs_per_cell: 100,
            phi_concentration: 0.1,
            theta_concentration: 0.1,
            spatial_smoothness: 0.5,
            seed,
            second_half_theta_concentration: Some(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_communities == 0 || self.vocab_size == 0 || self.n_cells == 0 || self.obs_per_cell == 0 {
            return Err(Error::input("synthetic sizes must be positive"));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::input(format!("{name} must be positive, got {v}")))
            }
        };
        positive("phi_concentration", self.phi_concentration)?;
        positive("theta_concentration", self.theta_concentration)?;
        if let Some(c) = self.second_half_theta_concentration {
            positive("second_half_theta_concentration", c)?;
        }
        if !(0.0..=1.0).contains(&self.spatial_smoothness) {
            return Err(Error::input(format!(
                "spatial_smoothness must lie in [0, 1], got {}",
                self.spatial_smoothness
            )));
        }
        Ok(())
    }
}

/// Statistics of a generated fixture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureStats {
    /// Smallest total-variation distance between two community rows.
    pub min_community_separation: f64,
    /// Empirical share of each taxon among all detections.
    pub taxon_base_rates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: SurveyDataset,
    /// K rows over V taxa.
    pub phi: Vec<Vec<f64>>,
    /// One community mixture per cell, in track order.
    pub theta: Vec<Vec<f64>>,
    pub stats: FixtureStats,
}

impl SynthOutput {
    /// True probability of `taxon` at track cell `cell`.
    pub fn target_probability(&self, cell: usize, taxon: usize) -> f64 {
        self.theta[cell]
            .iter()
            .zip(&self.phi)
            .map(|(t, row)| t * row[taxon])
            .sum()
    }
}

fn dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("validated concentration");
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|x| x / total).collect();
        }
    }
}

fn categorical<R: Rng + ?Sized>(rng: &mut R, p: &[f64]) -> usize {
    crate::topic::sample_index(p, rng)
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let (k, v, n) = (spec.n_communities, spec.vocab_size, spec.n_cells);

    let phi: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(&mut rng, spec.phi_concentration, v)).collect();
    let half = n.div_ceil(2);
    let raw: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let conc = match spec.second_half_theta_concentration {
                Some(second) if c >= half => second,
                _ => spec.theta_concentration,
            };
            dirichlet(&mut rng, conc, k)
        })
        .collect();
    let s = spec.spatial_smoothness;
    let theta: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let nbrs: Vec<&Vec<f64>> = [c.checked_sub(1), (c + 1 < n).then_some(c + 1)]
                .into_iter()
                .flatten()
                .map(|j| &raw[j])
                .collect();
            if nbrs.is_empty() || s == 0.0 {
                return raw[c].clone();
            }
            (0..k)
                .map(|j| {
                    let mean = nbrs.iter().map(|r| r[j]).sum::<f64>() / nbrs.len() as f64;
                    (1.0 - s) * raw[c][j] + s * mean
                })
                .collect()
        })
        .collect();

    let mut totals = vec![0u64; v];
    let mut samples = Vec::with_capacity(n);
    for (c, mix) in theta.iter().enumerate() {
        let mut counts = vec![0u32; v];
        for _ in 0..spec.obs_per_cell {
            let z = categorical(&mut rng, mix);
            let w = categorical(&mut rng, &phi[z]);
            counts[w] += 1;
            totals[w] += 1;
        }
        let location = Location {
            time: c as f64 * TRACK_STEP_S,
            easting: (c as f64 + 0.5) * TRACK_STEP_M,
            northing: 0.5 * TRACK_STEP_M,
        };
        samples.push(SampleDistribution::new(c as u64, location, counts)?);
    }
    let names = (0..v).map(|i| format!("taxon_{i:02}")).collect();
    let dataset = SurveyDataset::new(names, samples)?;

    let grand: u64 = totals.iter().sum();
    let mut sep = f64::INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            let tv = 0.5 * phi[a].iter().zip(&phi[b]).map(|(x, y)| (x - y).abs()).sum::<f64>();
            sep = sep.min(tv);
        }
    }
    let stats = FixtureStats {
        min_community_separation: if k > 1 { sep } else { 0.0 },
        taxon_base_rates: totals.iter().map(|&t| t as f64 / grand as f64).collect(),
    };
    Ok(SynthOutput {
        dataset,
        phi,
        theta,
        stats,
    })
}
