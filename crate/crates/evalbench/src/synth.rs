//! Grouped uniform synthetic data.

use knowlens_core::dataset::{AttributeSpec, Column, Dataset};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub count: usize,
    /// One `[lo, hi]` range per dimension, or a single range used for all.
    pub ranges: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub groups: Vec<GroupSpec>,
    pub dims: usize,
    pub seed: u64,
}

impl GroupSpec {
    fn range(&self, dim: usize) -> (f64, f64) {
        if self.ranges.len() == 1 {
            self.ranges[0]
        } else {
            self.ranges[dim]
        }
    }
}

impl SyntheticSpec {
    /// Four groups of 250 five-dimensional samples. B overlaps A on 60% of
    /// the range width, C on 40%, and D not at all.
    pub fn four_groups(seed: u64) -> Self {
        let group = |name: &str, lo: f64| GroupSpec {
            name: name.to_owned(),
            count: 250,
            ranges: vec![(lo, lo + 1.0)],
        };
        Self {
            groups: vec![group("A", 0.0), group("B", 0.4), group("C", 1.0), group("D", 3.0)],
            dims: 5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 || self.groups.is_empty() {
            return Err(BenchError::InvalidRange("need at least one group and dimension".into()));
        }
        for g in &self.groups {
            if g.count == 0 {
                return Err(BenchError::InvalidRange(format!("group `{}` is empty", g.name)));
            }
            if g.ranges.len() != 1 && g.ranges.len() != self.dims {
                return Err(BenchError::InvalidRange(format!(
                    "group `{}` has {} ranges for {} dimensions",
                    g.name,
                    g.ranges.len(),
                    self.dims
                )));
            }
            if let Some((lo, hi)) = g.ranges.iter().find(|(lo, hi)| !(lo < hi)) {
                return Err(BenchError::InvalidRange(format!(
                    "group `{}` has range [{lo}, {hi}]",
                    g.name
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }
}

/// Column name of synthetic dimension `j`.
pub fn dim_name(j: usize) -> String {
    format!("x{}", j + 1)
}

/// Generates the samples group by group. The dataset has one embedding
/// attribute per dimension plus a categorical `group` attribute; the second
/// value is the group index of every row.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n();
    let mut columns = vec![Vec::with_capacity(n); spec.dims];
    let mut names = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (gi, g) in spec.groups.iter().enumerate() {
        let dists: Vec<Uniform<f64>> = (0..spec.dims)
            .map(|j| {
                let (lo, hi) = g.range(j);
                Uniform::new_inclusive(lo, hi)
            })
            .collect();
        for _ in 0..g.count {
            for (col, dist) in columns.iter_mut().zip(&dists) {
                col.push(dist.sample(&mut rng));
            }
            names.push(g.name.as_str());
            labels.push(gi);
        }
    }
    let mut schema: Vec<AttributeSpec> = (0..spec.dims).map(|j| AttributeSpec::embedding(dim_name(j))).collect();
    schema.push(AttributeSpec::categorical("group"));
    let mut cols: Vec<Column> = columns.into_iter().map(Column::Numeric).collect();
    cols.push(Column::categorical_from(&names));
    Ok((Dataset::from_columns(schema, cols)?, labels))
}
