//! Tabular ingestion and the split between embedding features and
//! descriptive attributes.
//!
//! A [`Dataset`] is immutable once built. Embedding-feature columns feed the
//! network (and become Embedding Factors when explaining); every attribute,
//! embedding or descriptive, can be discretized to externalize knowledge.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrRole {
    Embedding,
    Descriptive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttrKind,
    pub role: AttrRole,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, kind: AttrKind, role: AttrRole) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
        }
    }

    pub fn embedding(name: impl Into<String>) -> Self {
        Self::new(name, AttrKind::Numeric, AttrRole::Embedding)
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        Self::new(name, AttrKind::Numeric, AttrRole::Descriptive)
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self::new(name, AttrKind::Categorical, AttrRole::Descriptive)
    }
}

/// Parses the JSON schema document `[{"name", "kind", "role"}, ...]`.
pub fn parse_schema(json: &str) -> Result<Vec<AttributeSpec>> {
    let schema: Vec<AttributeSpec> = serde_json::from_str(json).map_err(|e| Error::InvalidSchema(e.to_string()))?;
    validate_schema(&schema)?;
    Ok(schema)
}

pub fn validate_schema(schema: &[AttributeSpec]) -> Result<()> {
    let mut seen = HashSet::new();
    for attr in schema {
        if !seen.insert(attr.name.as_str()) {
            return Err(Error::InvalidSchema(format!("duplicate attribute `{}`", attr.name)));
        }
        if attr.role == AttrRole::Embedding && attr.kind != AttrKind::Numeric {
            return Err(Error::InvalidSchema(format!(
                "embedding feature `{}` must be numeric",
                attr.name
            )));
        }
    }
    if !schema.iter().any(|a| a.role == AttrRole::Embedding) {
        return Err(Error::InvalidSchema(
            "at least one embedding-feature attribute is required".into(),
        ));
    }
    if !schema.iter().any(|a| a.role == AttrRole::Descriptive) {
        return Err(Error::InvalidSchema(
            "at least one descriptive attribute is required".into(),
        ));
    }
    Ok(())
}

/// Column storage. Categorical values are interned; `levels` keeps first
/// appearance order.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical { codes: Vec<u32>, levels: Vec<String> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Interns a list of strings into a categorical column.
    pub fn categorical_from<S: AsRef<str>>(values: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut index: HashMap<String, u32> = HashMap::new();
        let codes = values
            .iter()
            .map(|v| {
                let v = v.as_ref();
                *index.entry(v.to_owned()).or_insert_with(|| {
                    levels.push(v.to_owned());
                    (levels.len() - 1) as u32
                })
            })
            .collect();
        Column::Categorical { codes, levels }
    }
}

/// A single cell, borrowed from the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Num(f64),
    Cat(&'a str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<AttributeSpec>,
    columns: Vec<Column>,
    n: usize,
    embedding_idx: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from already-typed columns, checking every invariant
    /// `load_dataset` would.
    pub fn from_columns(schema: Vec<AttributeSpec>, columns: Vec<Column>) -> Result<Self> {
        validate_schema(&schema)?;
        if schema.len() != columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} attributes but {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        for (attr, col) in schema.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::SchemaMismatch(format!(
                    "column `{}` has {} rows, expected {n}",
                    attr.name,
                    col.len()
                )));
            }
            match (attr.kind, col) {
                (AttrKind::Numeric, Column::Numeric(values)) => {
                    if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                        return Err(Error::ParseError {
                            row,
                            column: attr.name.clone(),
                            message: "non-finite value".into(),
                        });
                    }
                }
                (AttrKind::Categorical, Column::Categorical { .. }) => {}
                _ => {
                    return Err(Error::SchemaMismatch(format!(
                        "column `{}` does not match its declared kind",
                        attr.name
                    )))
                }
            }
        }
        let embedding_idx = schema
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == AttrRole::Embedding)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            schema,
            columns,
            n,
            embedding_idx,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Embedding-feature dimensionality.
    pub fn d(&self) -> usize {
        self.embedding_idx.len()
    }

    pub fn schema(&self) -> &[AttributeSpec] {
        &self.schema
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_owned()))
    }

    pub fn attribute(&self, name: &str) -> Result<(&AttributeSpec, &Column)> {
        let idx = self.attribute_index(name)?;
        Ok((&self.schema[idx], &self.columns[idx]))
    }

    pub fn column(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn value(&self, attr_idx: usize, row: usize) -> Value<'_> {
        match &self.columns[attr_idx] {
            Column::Numeric(v) => Value::Num(v[row]),
            Column::Categorical { codes, levels } => Value::Cat(&levels[codes[row] as usize]),
        }
    }

    pub fn embedding_names(&self) -> Vec<&str> {
        self.embedding_idx
            .iter()
            .map(|&i| self.schema[i].name.as_str())
            .collect()
    }

    pub fn descriptive_names(&self) -> Vec<&str> {
        self.schema
            .iter()
            .filter(|a| a.role == AttrRole::Descriptive)
            .map(|a| a.name.as_str())
            .collect()
    }

    /// Raw (unnormalized) embedding features, n × d.
    pub fn raw_features(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.d()));
        for (j, &col) in self.embedding_idx.iter().enumerate() {
            if let Column::Numeric(values) = &self.columns[col] {
                for (i, v) in values.iter().enumerate() {
                    out[[i, j]] = *v;
                }
            }
        }
        out
    }
}

/// Reads a CSV byte stream against an explicit schema.
///
/// Header names must match the schema names as a set; schema order defines
/// attribute order. Row numbers in [`Error::ParseError`] are zero-based data
/// rows, i.e. sample indices.
pub fn load_dataset<R: Read>(source: R, schema: &[AttributeSpec]) -> Result<Dataset> {
    validate_schema(schema)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| Error::SchemaMismatch(e.to_string()))?
        .clone();

    let mut position = vec![usize::MAX; schema.len()];
    let mut header_seen = HashSet::new();
    for (col, name) in header.iter().enumerate() {
        if !header_seen.insert(name) {
            return Err(Error::SchemaMismatch(format!("duplicate header `{name}`")));
        }
        match schema.iter().position(|a| a.name == name) {
            Some(attr) => position[attr] = col,
            None => {
                return Err(Error::SchemaMismatch(format!(
                    "header column `{name}` is not in the schema"
                )))
            }
        }
    }
    if let Some(missing) = position.iter().position(|&p| p == usize::MAX) {
        return Err(Error::SchemaMismatch(format!(
            "schema attribute `{}` missing from header",
            schema[missing].name
        )));
    }

    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    let mut text: Vec<Vec<String>> = vec![Vec::new(); schema.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::ParseError {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        for (attr_idx, attr) in schema.iter().enumerate() {
            let raw = record.get(position[attr_idx]).unwrap_or("");
            if raw.trim().is_empty() {
                return Err(Error::ParseError {
                    row,
                    column: attr.name.clone(),
                    message: "missing value".into(),
                });
            }
            match attr.kind {
                AttrKind::Numeric => {
                    let v: f64 = raw.trim().parse().map_err(|_| Error::ParseError {
                        row,
                        column: attr.name.clone(),
                        message: format!("`{raw}` is not a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::ParseError {
                            row,
                            column: attr.name.clone(),
                            message: format!("`{raw}` is not finite"),
                        });
                    }
                    numeric[attr_idx].push(v);
                }
                AttrKind::Categorical => text[attr_idx].push(raw.to_owned()),
            }
        }
    }

    let columns = schema
        .iter()
        .enumerate()
        .map(|(i, attr)| match attr.kind {
            AttrKind::Numeric => Column::Numeric(std::mem::take(&mut numeric[i])),
            AttrKind::Categorical => Column::categorical_from(&text[i]),
        })
        .collect::<Vec<_>>();
    if columns[0].is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::from_columns(schema.to_vec(), columns)
}

/// Min-max normalized embedding features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    /// Per-dimension `(min, max)` of the raw data.
    pub ranges: Vec<(f64, f64)>,
}

impl FeatureMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    /// Maps normalized values back to the raw scale. Constant dimensions come
    /// back as their constant.
    pub fn denormalize(&self) -> Array2<f64> {
        let mut out = self.values.clone();
        for (j, &(lo, hi)) in self.ranges.iter().enumerate() {
            out.column_mut(j).mapv_inplace(|v| lo + v * (hi - lo));
        }
        out
    }
}

/// Scales every embedding-feature dimension to `[0, 1]`; constant dimensions
/// map to 0.
pub fn normalize_features(ds: &Dataset) -> FeatureMatrix {
    normalize_matrix(ds.raw_features())
}

pub fn normalize_matrix(mut values: Array2<f64>) -> FeatureMatrix {
    let mut ranges = Vec::with_capacity(values.ncols());
    for mut col in values.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        if span > 0.0 {
            col.mapv_inplace(|v| ((v - lo) / span).clamp(0.0, 1.0));
        } else {
            col.fill(0.0);
        }
        ranges.push((lo, hi));
    }
    FeatureMatrix { values, ranges }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttributeSummary {
    Numeric {
        name: String,
        min: f64,
        max: f64,
        count: usize,
    },
    Categorical {
        name: String,
        /// Distinct values with their counts, sorted by value.
        values: Vec<(String, usize)>,
    },
}

impl AttributeSummary {
    pub fn count(&self) -> usize {
        match self {
            AttributeSummary::Numeric { count, .. } => *count,
            AttributeSummary::Categorical { values, .. } => values.iter().map(|(_, c)| c).sum(),
        }
    }
}

pub fn attribute_summary(ds: &Dataset, attr: &str) -> Result<AttributeSummary> {
    let (spec, column) = ds.attribute(attr)?;
    Ok(match column {
        Column::Numeric(values) => AttributeSummary::Numeric {
            name: spec.name.clone(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        },
        Column::Categorical { codes, levels } => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for &c in codes {
                *counts.entry(levels[c as usize].as_str()).or_default() += 1;
            }
            AttributeSummary::Categorical {
                name: spec.name.clone(),
                values: counts.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            }
        }
    })
}
