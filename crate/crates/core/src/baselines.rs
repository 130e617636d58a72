//! Nearest-neighbor and k-means comparison strategies.
//!
//! Both work on relative-abundance vectors with the target taxon deleted
//! and the remainder renormalized. Held-out test samples never contain the
//! target, so comparing unmasked vectors would separate test from train
//! for that reason alone.

use rand::Rng;

use crate::data::SampleDistribution;
use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 10;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: Option<&[f64]>, b: Option<&[f64]>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => sq_dist(a, b).sqrt(),
        _ => f64::INFINITY,
    }
}

/// Euclidean distance between masked relative abundances. A sample holding
/// only the target has no masked distribution and is infinitely far from
/// everything.
pub fn masked_distance(a: &SampleDistribution, b: &SampleDistribution, v_star: usize) -> f64 {
    dist(a.masked(v_star).as_deref(), b.masked(v_star).as_deref())
}

/// Exhaustive nearest-neighbor search over a fixed training set.
#[derive(Debug, Clone)]
pub struct NearestNeighbor {
    v_star: usize,
    // (masked distribution, target abundance) ordered by (time, input index)
    train: Vec<(Vec<f64>, f64)>,
}

impl NearestNeighbor {
    pub fn new(train: &[SampleDistribution], v_star: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::input("nearest-neighbor search needs training samples"));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.sort_by(|&a, &b| {
            train[a]
                .location
                .time
                .total_cmp(&train[b].location.time)
                .then(a.cmp(&b))
        });
        let train: Vec<_> = order
            .into_iter()
            .filter_map(|i| {
                let s = &train[i];
                s.masked(v_star).map(|m| (m, target_abundance(s, v_star)))
            })
            .collect();
        if train.is_empty() {
            return Err(Error::input(
                "no training sample contains taxa other than the target",
            ));
        }
        Ok(Self { v_star, train })
    }

    /// Target abundance of the closest training sample; ties go to the
    /// earliest sample.
    pub fn predict(&self, test: &SampleDistribution) -> f64 {
        let q = test.masked(self.v_star);
        let mut best = (f64::INFINITY, 0usize);
        let mut found = false;
        for (i, (m, _)) in self.train.iter().enumerate() {
            let d = dist(q.as_deref(), Some(m));
            if !found || d < best.0 {
                best = (d, i);
                found = true;
            }
        }
        self.train[best.1].1
    }
}

fn target_abundance(s: &SampleDistribution, v_star: usize) -> f64 {
    s.rel_abundance().get(v_star).copied().unwrap_or(0.0)
}

pub fn nn_predict(
    train: &[SampleDistribution],
    test: &SampleDistribution,
    v_star: usize,
) -> Result<f64> {
    Ok(NearestNeighbor::new(train, v_star)?.predict(test))
}

/// k-means centroids over masked distributions, each carrying the mean
/// target abundance of the training samples assigned to it.
#[derive(Debug, Clone)]
pub struct CentroidSet {
    pub v_star: usize,
    pub centroids: Vec<Vec<f64>>,
    pub target_abundance: Vec<f64>,
    /// Within-cluster sum of squares of the returned solution.
    pub sse: f64,
    /// SSE after each assignment step of the returned restart.
    pub sse_trace: Vec<f64>,
}

impl CentroidSet {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// One centroid per usable training sample, ordered by time, with no
    /// Lloyd iterations.
    pub fn from_points(train: &[SampleDistribution], v_star: usize) -> Result<Self> {
        let nn = NearestNeighbor::new(train, v_star)?;
        let (centroids, target_abundance) = nn.train.into_iter().unzip();
        Ok(Self {
            v_star,
            centroids,
            target_abundance,
            sse: 0.0,
            sse_trace: vec![0.0],
        })
    }

    /// Index of the closest centroid; ties go to the lowest index.
    pub fn nearest(&self, point: Option<&[f64]>) -> usize {
        let mut best = (f64::INFINITY, 0usize);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = dist(point, Some(c));
            if i == 0 || d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

pub fn kmeans_predict(cs: &CentroidSet, test: &SampleDistribution, v_star: usize) -> Result<f64> {
    if cs.centroids.is_empty() {
        return Err(Error::input("empty centroid set"));
    }
    if v_star != cs.v_star {
        return Err(Error::input(format!(
            "centroids were fit holding out taxon {}, not {v_star}",
            cs.v_star
        )));
    }
    let q = test.masked(v_star);
    Ok(cs.target_abundance[cs.nearest(q.as_deref())])
}

fn nearest_index(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_plus_plus<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            crate::topic::sample_index(&d2, rng)
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

struct Run {
    centroids: Vec<Vec<f64>>,
    assign: Vec<usize>,
    sse: f64,
    trace: Vec<f64>,
}

fn assign_all(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut sse = 0.0;
    let assign = points
        .iter()
        .map(|p| {
            let (i, d) = nearest_index(p, centroids);
            sse += d;
            i
        })
        .collect();
    (assign, sse)
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Run {
    let dim = points[0].len();
    let k = centroids.len();
    let (mut assign, mut sse) = assign_all(points, &centroids);
    let mut trace = vec![sse];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            sizes[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if sizes[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / sizes[j] as f64).collect();
            }
        }
        let mut reseeded = Vec::new();
        for j in 0..k {
            if sizes[j] == 0 {
                // farthest point from its own centroid takes over the empty cluster
                let far = points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !reseeded.contains(i))
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assign[i]])))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i);
                if let Some(i) = far {
                    centroids[j] = points[i].clone();
                    reseeded.push(i);
                }
            }
        }
        let (next, next_sse) = assign_all(points, &centroids);
        trace.push(next_sse);
        sse = next_sse;
        if next == assign {
            break;
        }
        assign = next;
    }
    Run {
        centroids,
        assign,
        sse,
        trace,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// SSE wins.
pub fn kmeans_fit<R: Rng + ?Sized>(
    train: &[SampleDistribution],
    k: usize,
    v_star: usize,
    rng: &mut R,
    n_restarts: usize,
) -> Result<CentroidSet> {
    if k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    let (points, abundance): (Vec<Vec<f64>>, Vec<f64>) = train
        .iter()
        .filter_map(|s| s.masked(v_star).map(|m| (m, target_abundance(s, v_star))))
        .unzip();
    if k > points.len() {
        return Err(Error::input(format!(
            "k = {k} exceeds the {} usable training samples",
            points.len()
        )));
    }
    let mut best: Option<Run> = None;
    for _ in 0..n_restarts.max(1) {
        let run = lloyd(&points, kmeans_plus_plus(&points, k, rng));
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let run = best.unwrap();
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (&a, &ab) in run.assign.iter().zip(&abundance) {
        sums[a] += ab;
        sizes[a] += 1;
    }
    let target_abundance = (0..k)
        .map(|j| {
            if sizes[j] > 0 {
                sums[j] / sizes[j] as f64
            } else {
                let (i, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &run.centroids[j])))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                abundance[i]
            }
        })
        .collect();
    Ok(CentroidSet {
        v_star,
        centroids: run.centroids,
        target_abundance,
        sse: run.sse,
        sse_trace: run.trace,
    })
}
