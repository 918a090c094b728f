use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 20;

/// Two selections counted over shared bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts_a: Vec<usize>,
    pub counts_b: Vec<usize>,
    pub labels: Vec<String>,
}

fn bin_index(edges: &[f64], v: f64) -> usize {
    let inner = &edges[1..edges.len() - 1];
    inner.partition_point(|&e| e <= v)
}

/// Equal-width bins over the union of both value sets, last bin closed.
/// Binary factors always get the two bins `0` and `1`.
pub fn histogram(a: &[f64], b: &[f64], bins: usize, binary: bool) -> Result<Histogram> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySelection);
    }
    if bins == 0 {
        return Err(Error::InvalidBins("bin count must be at least 1".into()));
    }
    let (edges, labels) = if binary {
        (vec![0.0, 0.5, 1.0], vec!["0".to_owned(), "1".to_owned()])
    } else {
        let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
        let mut hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
        edges.push(hi);
        let labels = (0..bins)
            .map(|i| {
                let close = if i + 1 == bins { ']' } else { ')' };
                format!("[{}, {}{close}", edges[i], edges[i + 1])
            })
            .collect();
        (edges, labels)
    };
    let count = |values: &[f64]| {
        let mut counts = vec![0usize; edges.len() - 1];
        for &v in values {
            counts[bin_index(&edges, v)] += 1;
        }
        counts
    };
    Ok(Histogram {
        counts_a: count(a),
        counts_b: count(b),
        edges,
        labels,
    })
}

/// Shared mass of the two normalized distributions, in `[0, 1]`.
pub fn overlap_coefficient(h: &Histogram) -> f64 {
    let (na, nb) = (
        h.counts_a.iter().sum::<usize>() as f64,
        h.counts_b.iter().sum::<usize>() as f64,
    );
    h.counts_a
        .iter()
        .zip(&h.counts_b)
        .map(|(&a, &b)| (a as f64 / na).min(b as f64 / nb))
        .sum()
}
