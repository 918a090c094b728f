//! Per-bin feature vectors and K-means grouping suggestions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, KMeansConfig};
use crate::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::knowledge::BinSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFeature {
    pub bin: usize,
    pub vector: Vec<f64>,
    pub member_count: usize,
}

/// Summarizes each non-empty bin of `bins` (over `samples`) as one vector.
///
/// Numeric attributes contribute the member mean, min-max scaled across bins.
/// When every bin has the same mean the raw mean is kept. Categorical
/// attributes contribute the mean one-hot vector over the attribute's levels
/// in sorted order.
pub fn group_features(
    ds: &Dataset,
    bins: &BinSet,
    grouping_attrs: &[&str],
    samples: &[usize],
) -> Result<Vec<GroupFeature>> {
    let bin_attr = ds.attribute_index(&bins.attribute)?;
    let attrs = grouping_attrs
        .iter()
        .map(|a| ds.attribute_index(a))
        .collect::<Result<Vec<_>>>()?;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins.len()];
    for &s in samples {
        if let Some(b) = bins.bin_of(ds, bin_attr, s) {
            members[b].push(s);
        }
    }
    if members.iter().all(Vec::is_empty) {
        return Err(Error::NoActiveSamples);
    }

    let mut features: Vec<GroupFeature> = members
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(bin, m)| GroupFeature {
            bin,
            vector: Vec::new(),
            member_count: m.len(),
        })
        .collect();

    for &attr in &attrs {
        match ds.column(attr) {
            Column::Numeric(values) => {
                let means: Vec<f64> = features
                    .iter()
                    .map(|f| {
                        let m = &members[f.bin];
                        m.iter().map(|&s| values[s]).sum::<f64>() / m.len() as f64
                    })
                    .collect();
                let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for (f, mean) in features.iter_mut().zip(means) {
                    f.vector.push(if hi > lo { (mean - lo) / (hi - lo) } else { mean });
                }
            }
            Column::Categorical { codes, levels } => {
                let mut order: Vec<usize> = (0..levels.len()).collect();
                order.sort_by(|&a, &b| levels[a].cmp(&levels[b]));
                let mut slot = vec![0usize; levels.len()];
                for (pos, &level) in order.iter().enumerate() {
                    slot[level] = pos;
                }
                for f in features.iter_mut() {
                    let m = &members[f.bin];
                    let mut block = vec![0.0; levels.len()];
                    for &s in m {
                        block[slot[codes[s] as usize]] += 1.0;
                    }
                    f.vector.extend(block.into_iter().map(|c| c / m.len() as f64));
                }
            }
        }
    }
    Ok(features)
}

/// Suggests a grouping of bins: returns one cluster id per entry of
/// `features`. Advisory only; the analyst's mapping is authoritative.
pub fn suggest_grouping(features: &[GroupFeature], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > features.len() {
        return Err(Error::TooManyClusters {
            requested: k,
            available: features.len(),
        });
    }
    let dim = features[0].vector.len();
    let data = Array2::from_shape_fn((features.len(), dim), |(i, j)| features[i].vector[j]);
    Ok(kmeans(data.view(), &KMeansConfig::new(k, seed))?.labels)
}
