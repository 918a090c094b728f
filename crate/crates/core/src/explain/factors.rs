use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_features, Dataset};
use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeTree, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorKind {
    /// One dimension of the embedded data feature.
    #[serde(rename = "EF")]
    Embedding,
    /// One value interval of an attribute used to define classes.
    #[serde(rename = "CF")]
    Classification,
}

impl std::str::FromStr for FactorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "EF" | "ef" => Ok(Self::Embedding),
            "CF" | "cf" => Ok(Self::Classification),
            other => Err(Error::InvalidComparison(format!("unknown factor kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Factor {
    pub name: String,
    pub kind: FactorKind,
    /// Column holds 0/1 membership.
    pub binary: bool,
    /// Attribute the factor reads.
    pub attribute: String,
    /// Split node and bin behind a classification factor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin: Option<(NodeId, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSet {
    pub kind: FactorKind,
    pub factors: Vec<Factor>,
}

impl FactorSet {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFactor(name.to_owned()))
    }
}

/// The factor columns for every sample of `ds`. Embedding factors are the
/// normalized features; classification factors are 0/1 indicators of the
/// live bins of `tree`.
pub fn factor_matrix(ds: &Dataset, tree: &KnowledgeTree, kind: FactorKind) -> Result<(Array2<f64>, FactorSet)> {
    match kind {
        FactorKind::Embedding => {
            let factors = ds
                .embedding_names()
                .into_iter()
                .map(|name| Factor {
                    name: name.to_owned(),
                    kind,
                    binary: false,
                    attribute: name.to_owned(),
                    bin: None,
                })
                .collect();
            Ok((normalize_features(ds).values, FactorSet { kind, factors }))
        }
        FactorKind::Classification => {
            let live = tree.live_bins();
            if live.is_empty() {
                return Err(Error::NoBins);
            }
            let mut matrix = Array2::zeros((ds.n(), live.len()));
            let mut factors = Vec::with_capacity(live.len());
            let mut seen = HashSet::new();
            for (col, &(node, bin)) in live.iter().enumerate() {
                let split = tree.node(node)?.split.as_ref().ok_or(Error::InvalidNode(node))?;
                let attr = ds.attribute_index(&split.bins.attribute)?;
                for row in 0..ds.n() {
                    if split.bins.bin_of(ds, attr, row) == Some(bin) {
                        matrix[[row, col]] = 1.0;
                    }
                }
                let mut name = split.bins.label(bin);
                if !seen.insert(name.clone()) {
                    name = format!("{name} (node {node})");
                    seen.insert(name.clone());
                }
                factors.push(Factor {
                    name,
                    kind,
                    binary: true,
                    attribute: split.bins.attribute.clone(),
                    bin: Some((node, bin)),
                });
            }
            Ok((matrix, FactorSet { kind, factors }))
        }
    }
}
