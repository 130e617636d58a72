use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};

/// Offset below the smallest score so the lowest threshold predicts every
/// sample.
pub const BELOW_ALL: f64 = -1e-9;

/// Confusion counts and precision/recall at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PRPoint {
    pub tau: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
}

impl PRPoint {
    /// Precision of an empty prediction set is 1; recall against an empty
    /// truth set is 0.
    pub fn from_counts(tau: f64, tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        Self {
            tau,
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
        }
    }
}

/// Every distinct score, ascending, preceded by a threshold below all of
/// them.
pub fn threshold_grid<'a>(scores: impl IntoIterator<Item = &'a f64>) -> Vec<f64> {
    let mut t: Vec<f64> = scores.into_iter().copied().collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    let floor = t.first().map_or(BELOW_ALL, |&m| m.min(0.0) + BELOW_ALL);
    t.insert(0, floor);
    t
}

/// One confusion matrix per threshold; a sample is predicted a hotspot
/// when its score strictly exceeds the threshold.
pub fn score_predictions(
    scores: &BTreeMap<u64, f64>,
    truth: &BTreeSet<u64>,
    thresholds: &[f64],
) -> Result<Vec<PRPoint>> {
    if let Some(id) = truth.iter().find(|id| !scores.contains_key(id)) {
        return Err(Error::input(format!("hotspot sample {id} has no score")));
    }
    let mut pos: Vec<f64> = Vec::with_capacity(truth.len());
    let mut neg: Vec<f64> = Vec::with_capacity(scores.len());
    for (id, &s) in scores {
        if truth.contains(id) {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let above = |sorted: &[f64], tau: f64| (sorted.len() - sorted.partition_point(|&s| s <= tau)) as u64;
    Ok(thresholds
        .iter()
        .map(|&tau| {
            let tp = above(&pos, tau);
            let fp = above(&neg, tau);
            PRPoint::from_counts(tau, tp, fp, pos.len() as u64 - tp, neg.len() as u64 - fp)
        })
        .collect())
}

/// Micro-average: confusion counts summed per threshold across taxa.
pub fn aggregate_pr(per_taxon: &[Vec<PRPoint>]) -> Result<Vec<PRPoint>> {
    let Some(first) = per_taxon.first() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(first.len());
    for (j, p0) in first.iter().enumerate() {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for curve in per_taxon {
            let p = curve
                .get(j)
                .filter(|p| p.tau == p0.tau)
                .ok_or_else(|| Error::input("precision-recall curves use different thresholds"))?;
            tp += p.tp;
            fp += p.fp;
            fn_ += p.fn_;
            tn += p.tn;
        }
        out.push(PRPoint::from_counts(p0.tau, tp, fp, fn_, tn));
    }
    if per_taxon.iter().any(|c| c.len() != first.len()) {
        return Err(Error::input("precision-recall curves use different thresholds"));
    }
    Ok(out)
}

/// Trapezoidal area under precision over recall. Points are ordered by
/// recall, and by falling precision within equal recall, which is the
/// order a decreasing threshold visits them.
pub fn auc_pr(points: &[PRPoint]) -> f64 {
    let mut pr: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.precision)).collect();
    pr.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pr.dedup();
    let distinct = {
        let mut r: Vec<f64> = pr.iter().map(|p| p.0).collect();
        r.dedup();
        r.len()
    };
    if distinct < 2 {
        return 0.0;
    }
    let area: f64 = pr
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    area.clamp(0.0, 1.0)
}
