use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{AttrKind, Column, Dataset, Value};
use crate::error::{Error, Result};

/// How an attribute's value range is cut into bins.
///
/// Numeric bins are `[edges[i], edges[i + 1])`, the last one closed on the
/// right, so neighbouring bins share their edge exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BinLayout {
    Numeric { edges: Vec<f64> },
    Categorical { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSet {
    pub attribute: String,
    pub layout: BinLayout,
}

/// One bin, as seen from outside the layout.
#[derive(Debug, Clone, PartialEq)]
pub enum Bin<'a> {
    Interval { lo: f64, hi: f64, closed: bool },
    Category(&'a str),
}

impl BinSet {
    pub fn len(&self) -> usize {
        match &self.layout {
            BinLayout::Numeric { edges } => edges.len() - 1,
            BinLayout::Categorical { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bin count for numeric layouts; categorical layouts have no resolution.
    pub fn resolution(&self) -> Option<usize> {
        match &self.layout {
            BinLayout::Numeric { edges } => Some(edges.len() - 1),
            BinLayout::Categorical { .. } => None,
        }
    }

    pub fn bin(&self, i: usize) -> Bin<'_> {
        match &self.layout {
            BinLayout::Numeric { edges } => Bin::Interval {
                lo: edges[i],
                hi: edges[i + 1],
                closed: i + 2 == edges.len(),
            },
            BinLayout::Categorical { values } => Bin::Category(&values[i]),
        }
    }

    pub fn label(&self, i: usize) -> String {
        match self.bin(i) {
            Bin::Interval { lo, hi, closed } => {
                format!("{}: [{lo}, {hi}{}", self.attribute, if closed { "]" } else { ")" })
            }
            Bin::Category(v) => format!("{} = {v}", self.attribute),
        }
    }

    pub fn bin_of_value(&self, value: Value<'_>) -> Option<usize> {
        match (&self.layout, value) {
            (BinLayout::Numeric { edges }, Value::Num(v)) => {
                let last = *edges.last()?;
                if !(v >= edges[0] && v <= last) {
                    return None;
                }
                let inner = &edges[1..edges.len() - 1];
                Some(inner.partition_point(|&e| e <= v))
            }
            (BinLayout::Categorical { values }, Value::Cat(v)) => values.iter().position(|c| c == v),
            _ => None,
        }
    }

    /// Bin of one sample; `attr_idx` must be this bin set's attribute.
    pub fn bin_of(&self, ds: &Dataset, attr_idx: usize, row: usize) -> Option<usize> {
        self.bin_of_value(ds.value(attr_idx, row))
    }

    /// Builds a numeric layout from explicit edges.
    pub fn from_edges(attribute: impl Into<String>, edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidBins("need at least two edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBins(
                "edges must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self {
            attribute: attribute.into(),
            layout: BinLayout::Numeric { edges },
        })
    }
}

/// Equal-width bins over the full dataset.
pub fn discretize(ds: &Dataset, attr: &str, resolution: usize) -> Result<BinSet> {
    let all: Vec<usize> = (0..ds.n()).collect();
    discretize_samples(ds, attr, resolution, &all)
}

/// Equal-width bins over the value range of `samples` only, so a class can be
/// subdivided as if it were a dataset of its own. Categorical attributes get
/// one bin per distinct value present, sorted; `resolution` is ignored.
pub fn discretize_samples(ds: &Dataset, attr: &str, resolution: usize, samples: &[usize]) -> Result<BinSet> {
    let idx = ds.attribute_index(attr)?;
    if samples.is_empty() {
        return Err(Error::NoActiveSamples);
    }
    let layout = match (ds.schema()[idx].kind, ds.column(idx)) {
        (AttrKind::Numeric, Column::Numeric(values)) => {
            if resolution == 0 {
                return Err(Error::InvalidBins("resolution must be at least 1".into()));
            }
            let lo = samples.iter().map(|&s| values[s]).fold(f64::INFINITY, f64::min);
            let hi = samples.iter().map(|&s| values[s]).fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                if resolution > 1 {
                    return Err(Error::DegenerateRange(attr.to_owned()));
                }
                // a single closed bin [v, v]; the edges cannot be strictly
                // increasing so the layout is built directly
                BinLayout::Numeric { edges: vec![lo, hi] }
            } else {
                let width = hi - lo;
                let mut edges: Vec<f64> = (0..resolution)
                    .map(|j| lo + width * j as f64 / resolution as f64)
                    .collect();
                edges.push(hi);
                if edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::DegenerateRange(attr.to_owned()));
                }
                BinLayout::Numeric { edges }
            }
        }
        (AttrKind::Categorical, Column::Categorical { codes, levels }) => {
            let present: BTreeSet<&str> = samples.iter().map(|&s| levels[codes[s] as usize].as_str()).collect();
            BinLayout::Categorical {
                values: present.into_iter().map(str::to_owned).collect(),
            }
        }
        _ => unreachable!("dataset columns always match their declared kind"),
    };
    Ok(BinSet {
        attribute: attr.to_owned(),
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AttributeSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn numeric_ds(values: Vec<f64>) -> Dataset {
        let n = values.len();
        Dataset::from_columns(
            vec![AttributeSpec::embedding("f"), AttributeSpec::numeric("v")],
            vec![Column::Numeric(vec![0.0; n]), Column::Numeric(values)],
        )
        .unwrap()
    }

    #[test]
    fn equal_width_two_bins() {
        let ds = numeric_ds(vec![0.0, 3.0, 5.0, 10.0]);
        let bins = discretize(&ds, "v", 2).unwrap();
        assert_eq!(
            bins.layout,
            BinLayout::Numeric {
                edges: vec![0.0, 5.0, 10.0]
            }
        );
        let idx = ds.attribute_index("v").unwrap();
        let got: Vec<_> = (0..4).map(|r| bins.bin_of(&ds, idx, r)).collect();
        assert_eq!(got, vec![Some(0), Some(0), Some(1), Some(1)]);
        assert_eq!(bins.label(0), "v: [0, 5)");
        assert_eq!(bins.label(1), "v: [5, 10]");
    }

    #[test]
    fn degenerate_range() {
        let ds = numeric_ds(vec![2.0, 2.0]);
        assert_eq!(discretize(&ds, "v", 3).unwrap_err(), Error::DegenerateRange("v".into()));
        let one = discretize(&ds, "v", 1).unwrap();
        assert_eq!(one.bin_of(&ds, 1, 0), Some(0));
    }

    #[test]
    fn unknown_attribute() {
        let ds = numeric_ds(vec![1.0]);
        assert!(matches!(discretize(&ds, "nope", 2), Err(Error::UnknownAttribute(_))));
    }

    #[test]
    fn categorical_bins_sorted_and_unique() {
        let ds = Dataset::from_columns(
            vec![AttributeSpec::embedding("f"), AttributeSpec::categorical("c")],
            vec![
                Column::Numeric(vec![0.0; 5]),
                Column::categorical_from(&["b", "a", "c", "a", "b"]),
            ],
        )
        .unwrap();
        let bins = discretize(&ds, "c", 99).unwrap();
        assert_eq!(
            bins.layout,
            BinLayout::Categorical {
                values: vec!["a".into(), "b".into(), "c".into()]
            }
        );
        assert_eq!(bins.resolution(), None);
    }

    #[test]
    fn explicit_edges_validated() {
        assert!(BinSet::from_edges("v", vec![0.0]).is_err());
        assert!(BinSet::from_edges("v", vec![0.0, 0.0]).is_err());
        let b = BinSet::from_edges("v", vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(b.bin_of_value(Value::Num(4.0)), Some(1));
        assert_eq!(b.bin_of_value(Value::Num(4.5)), None);
        assert_eq!(b.bin_of_value(Value::Num(-0.1)), None);
    }

    #[test]
    fn every_sample_in_exactly_one_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let values: Vec<f64> = (0..500).map(|_| rng.gen_range(-3.0..8.0)).collect();
        let ds = numeric_ds(values.clone());
        let bins = discretize(&ds, "v", 7).unwrap();
        let BinLayout::Numeric { edges } = &bins.layout else {
            unreachable!()
        };
        let mut counts = [0usize; 7];
        for (row, &v) in values.iter().enumerate() {
            // linear scan oracle
            let hits: Vec<usize> = (0..7)
                .filter(|&b| {
                    let (lo, hi) = (edges[b], edges[b + 1]);
                    v >= lo && (v < hi || (b == 6 && v <= hi))
                })
                .collect();
            assert_eq!(hits.len(), 1);
            assert_eq!(bins.bin_of(&ds, 1, row), Some(hits[0]));
            counts[hits[0]] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 500);
    }
}
