//! Lloyd's k-means with k-means++ seeding.
//!
//! Ties in the assignment step go to the lowest centroid index. A cluster that
//! empties out is re-seeded with the point farthest from its current centroid
//! (taken from a cluster with more than one member), so every fit has exactly
//! `k` non-empty clusters whenever `k <= n`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest-SSE fit wins.
    pub n_init: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 100,
            tol: 1e-6,
            n_init: 10,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Total within-cluster sum of squared distances.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Within-cluster SSE of an arbitrary assignment, centroids taken as means.
pub fn sse(data: ArrayView2<f64>, labels: &[usize], k: usize) -> f64 {
    let centroids = means(data, labels, k);
    data.rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| sq_dist(row, centroids.row(l)))
        .sum()
}

fn means(data: ArrayView2<f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, data.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &l) in data.rows().into_iter().zip(labels) {
        let mut target = sums.row_mut(l);
        target += &row;
        counts[l] += 1;
    }
    for (mut row, &c) in sums.rows_mut().into_iter().zip(&counts) {
        if c > 0 {
            row /= c as f64;
        }
    }
    sums
}

fn plus_plus_init(data: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut centroids = Array2::zeros((k, data.ncols()));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&data.row(first));
    let mut closest: Vec<f64> = data.rows().into_iter().map(|r| sq_dist(r, data.row(first))).collect();
    let mut chosen = vec![first];
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // guard against landing on a zero-weight tail through rounding
            if closest[pick] == 0.0 {
                pick = closest.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(pick);
        centroids.row_mut(c).assign(&data.row(pick));
        for (i, row) in data.rows().into_iter().enumerate() {
            let d = sq_dist(row, data.row(pick));
            if d < closest[i] {
                closest[i] = d;
            }
        }
    }
    centroids
}

fn assign(data: ArrayView2<f64>, centroids: &Array2<f64>, labels: &mut [usize], dists: &mut [f64]) {
    for (i, row) in data.rows().into_iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.rows().into_iter().enumerate() {
            let d = sq_dist(row, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
    }
}

fn fill_empty(labels: &mut [usize], dists: &mut [f64], centroids: &mut Array2<f64>, data: ArrayView2<f64>) {
    let k = centroids.nrows();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, &d) in dists.iter().enumerate() {
            if counts[labels[i]] > 1 && d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        counts[labels[i]] -= 1;
        counts[empty] += 1;
        labels[i] = empty;
        dists[i] = 0.0;
        centroids.row_mut(empty).assign(&data.row(i));
    }
}

fn lloyd(data: ArrayView2<f64>, cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> KMeansFit {
    let n = data.nrows();
    let mut centroids = plus_plus_init(data, cfg.k, rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut iterations = 0;
    for _ in 0..cfg.max_iter.max(1) {
        iterations += 1;
        assign(data, &centroids, &mut labels, &mut dists);
        fill_empty(&mut labels, &mut dists, &mut centroids, data);
        let updated = means(data, &labels, cfg.k);
        let shift = updated
            .rows()
            .into_iter()
            .zip(centroids.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < cfg.tol {
            break;
        }
    }
    let inertia = data
        .rows()
        .into_iter()
        .zip(&labels)
        .map(|(row, &l)| sq_dist(row, centroids.row(l)))
        .sum();
    KMeansFit {
        labels,
        centroids,
        inertia,
        iterations,
    }
}

pub fn kmeans(data: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<KMeansFit> {
    if cfg.k == 0 || cfg.k > data.nrows() {
        return Err(Error::TooManyClusters {
            requested: cfg.k,
            available: data.nrows(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..cfg.n_init.max(1) {
        let fit = lloyd(data, cfg, &mut rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
