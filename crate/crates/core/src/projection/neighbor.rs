//! A compact UMAP-style layout: fuzzy k-NN graph, seeded random start,
//! and edge-sampled attraction with negative-sampling repulsion.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// curve parameters for a minimum distance of 0.1
const A: f64 = 1.577;
const B: f64 = 0.895;
const CLIP: f64 = 4.0;
const INIT_SPREAD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct NeighborParams {
    pub neighbors: usize,
    pub iterations: usize,
    pub negative_samples: usize,
}

impl Default for NeighborParams {
    fn default() -> Self {
        Self {
            neighbors: 15,
            iterations: 200,
            negative_samples: 5,
        }
    }
}

fn sq_dist(h: ArrayView2<f64>, i: usize, j: usize) -> f64 {
    h.row(i)
        .iter()
        .zip(h.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// k nearest neighbours of every row (excluding itself), ties by index.
fn knn(h: ArrayView2<f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = h.nrows();
    (0..n)
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, sq_dist(h, i, j).sqrt()))
                .collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Membership strengths of one neighbourhood, scaled so they sum to
/// `log2(k)`.
fn smooth_weights(neigh: &[(usize, f64)]) -> Vec<f64> {
    let target = (neigh.len() as f64).log2();
    let rho = neigh.iter().map(|&(_, d)| d).find(|&d| d > 0.0).unwrap_or(0.0);
    let mean = neigh.iter().map(|&(_, d)| d).sum::<f64>() / neigh.len() as f64;
    let total = |sigma: f64| -> f64 { neigh.iter().map(|&(_, d)| (-(d - rho).max(0.0) / sigma).exp()).sum() };
    let (mut lo, mut hi, mut sigma) = (0.0, f64::INFINITY, 1.0);
    for _ in 0..64 {
        let s = total(sigma);
        if (s - target).abs() < 1e-5 {
            break;
        }
        if s > target {
            hi = sigma;
            sigma = (lo + hi) / 2.0;
        } else {
            lo = sigma;
            sigma = if hi.is_finite() { (lo + hi) / 2.0 } else { sigma * 2.0 };
        }
    }
    let sigma = sigma.max(1e-3 * mean).max(f64::MIN_POSITIVE);
    neigh
        .iter()
        .map(|&(_, d)| (-(d - rho).max(0.0) / sigma).exp())
        .collect()
}

/// Symmetric fuzzy union `a + b − ab` of the directed k-NN memberships,
/// as an edge list `(i, j, w)` with `i < j`, sorted.
fn fuzzy_graph(h: ArrayView2<f64>, k: usize) -> Vec<(usize, usize, f64)> {
    let mut directed = std::collections::BTreeMap::new();
    for (i, neigh) in knn(h, k).iter().enumerate() {
        for (&(j, _), w) in neigh.iter().zip(smooth_weights(neigh)) {
            directed.insert((i, j), w);
        }
    }
    let mut edges = std::collections::BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let key = (i.min(j), i.max(j));
        if edges.contains_key(&key) {
            continue;
        }
        let back = directed.get(&(j, i)).copied().unwrap_or(0.0);
        edges.insert(key, w + back - w * back);
    }
    edges.into_iter().map(|((i, j), w)| (i, j, w)).collect()
}

fn clip(v: f64) -> f64 {
    v.clamp(-CLIP, CLIP)
}

/// 2D layout of the rows of `h`; deterministic given `seed`.
pub fn neighbor_embedding(h: ArrayView2<f64>, params: &NeighborParams, seed: u64) -> Result<Array2<f64>> {
    let n = h.nrows();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    if params.neighbors < 2 || params.neighbors >= n {
        return Err(Error::InvalidProjectionParams(format!(
            "neighbor count {} must lie in [2, {})",
            params.neighbors, n
        )));
    }
    if params.iterations == 0 {
        return Err(Error::InvalidProjectionParams("iterations must be positive".into()));
    }

    let mut edges = fuzzy_graph(h, params.neighbors);
    let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    edges.retain(|e| e.2 >= max_w / params.iterations as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Array2::from_shape_simple_fn((n, 2), || rng.gen_range(-INIT_SPREAD..INIT_SPREAD));

    let per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let per_negative: Vec<f64> = per_sample
        .iter()
        .map(|p| p / params.negative_samples.max(1) as f64)
        .collect();
    let mut next_sample = per_sample.clone();
    let mut next_negative = per_negative.clone();

    for epoch in 0..params.iterations {
        let rate = 1.0 - epoch as f64 / params.iterations as f64;
        let now = epoch as f64;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let (dx, dy) = (y[[i, 0]] - y[[j, 0]], y[[i, 1]] - y[[j, 1]]);
            let d2 = dx * dx + dy * dy;
            if d2 > 0.0 {
                let coeff = -2.0 * A * B * d2.powf(B - 1.0) / (A * d2.powf(B) + 1.0);
                let (gx, gy) = (clip(coeff * dx) * rate, clip(coeff * dy) * rate);
                y[[i, 0]] += gx;
                y[[i, 1]] += gy;
                y[[j, 0]] -= gx;
                y[[j, 1]] -= gy;
            }
            next_sample[e] += per_sample[e];

            if params.negative_samples > 0 {
                let count = ((now - next_negative[e]) / per_negative[e]).floor().max(0.0) as usize;
                for _ in 0..count {
                    let k = rng.gen_range(0..n);
                    if k == i {
                        continue;
                    }
                    let (dx, dy) = (y[[i, 0]] - y[[k, 0]], y[[i, 1]] - y[[k, 1]]);
                    let d2 = dx * dx + dy * dy;
                    let (gx, gy) = if d2 > 0.0 {
                        let coeff = 2.0 * B / ((0.001 + d2) * (A * d2.powf(B) + 1.0));
                        (clip(coeff * dx), clip(coeff * dy))
                    } else {
                        (CLIP, CLIP)
                    };
                    y[[i, 0]] += gx * rate;
                    y[[i, 1]] += gy * rate;
                }
                next_negative[e] += count as f64 * per_negative[e];
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn blobs(per: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((2 * per, dim), |(i, _)| {
            let c = if i < per { 0.0 } else { 8.0 };
            c + rng.gen_range(-1.0..1.0)
        })
    }

    #[test]
    fn neighbourhood_weights_hit_target() {
        let neigh: Vec<(usize, f64)> = (0..15).map(|j| (j, 0.5 + j as f64 * 0.1)).collect();
        let w = smooth_weights(&neigh);
        assert!((w.iter().sum::<f64>() - 15f64.log2()).abs() < 1e-4);
        assert_eq!(w[0], 1.0);
    }

    #[test]
    fn graph_is_symmetric_union() {
        let h = blobs(10, 3, 1);
        let g = fuzzy_graph(h.view(), 4);
        assert!(g.iter().all(|&(i, j, w)| i < j && w > 0.0 && w <= 1.0));
    }

    #[test]
    fn preconditions() {
        let h = blobs(1, 2, 2);
        assert!(matches!(
            neighbor_embedding(h.view(), &NeighborParams::default(), 0),
            Err(Error::TooFewSamples { .. })
        ));
        let h = blobs(5, 2, 2);
        assert!(neighbor_embedding(h.view(), &NeighborParams::default(), 0).is_err());
        let p = NeighborParams {
            neighbors: 4,
            ..Default::default()
        };
        assert!(neighbor_embedding(h.view(), &p, 0).is_ok());
    }

    #[test]
    fn deterministic_given_seed() {
        let h = blobs(20, 4, 3);
        let p = NeighborParams::default();
        let a = neighbor_embedding(h.view(), &p, 9).unwrap();
        let b = neighbor_embedding(h.view(), &p, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_ne!(a, neighbor_embedding(h.view(), &p, 10).unwrap());
    }
}
