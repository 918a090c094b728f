//! Clustering accuracy under optimal cluster-to-class matching.

use knowlens_core::cluster::{kmeans, max_weight_assignment, KMeansConfig};
use ndarray::ArrayView2;

use crate::{BenchError, Result};

/// Fraction of samples whose cluster maps to their class, maximized over
/// one-to-one cluster/class matchings.
pub fn matched_accuracy(clusters: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(clusters.len(), truth.len());
    if truth.is_empty() {
        return 0.0;
    }
    let k = clusters.iter().chain(truth).copied().max().unwrap() + 1;
    let mut counts = vec![vec![0.0; k]; k];
    for (&c, &t) in clusters.iter().zip(truth) {
        counts[c][t] += 1.0;
    }
    let assign = max_weight_assignment(&counts);
    let matched: f64 = assign.iter().enumerate().map(|(c, &t)| counts[c][t]).sum();
    matched / truth.len() as f64
}

/// K-means on the rows of `h`, then [`matched_accuracy`] against `truth`.
pub fn clustering_accuracy(h: ArrayView2<f64>, truth: &[usize], k: usize, seed: u64) -> Result<f64> {
    if h.nrows() < k {
        return Err(BenchError::TooFewSamples {
            needed: k,
            got: h.nrows(),
        });
    }
    let fit = kmeans(h, &KMeansConfig::new(k, seed))?;
    Ok(matched_accuracy(&fit.labels, truth))
}
