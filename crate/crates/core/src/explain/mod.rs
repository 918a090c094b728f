//! Explains a selected visual structure: a discriminator learns to tell it
//! apart from a contrast set, and Shapley values over embedding or
//! classification factors say which factors it relies on.

mod discriminator;
mod factors;
mod histogram;
mod shap;

pub use discriminator::{objective, sigmoid, train_discriminator, Discriminator, DEFAULT_LAMBDA};
pub use factors::{factor_matrix, Factor, FactorKind, FactorSet};
pub use histogram::{histogram, overlap_coefficient, Histogram, DEFAULT_BINS};
pub use shap::{default_coalitions, exact_shap, kernel_shap, Attributions, MAX_EXACT_FACTORS};

use std::collections::BTreeSet;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparisonMode {
    /// Selection A against selection B.
    Pair,
    /// Selection A against every other active sample.
    Rest,
}

/// Validates a comparison and returns `(A, B)` sorted. In rest mode `B` is
/// the active samples outside `A`.
pub fn resolve_comparison(active: &[usize], a: &[usize], b: Option<&[usize]>) -> Result<(Vec<usize>, Vec<usize>)> {
    let active: BTreeSet<usize> = active.iter().copied().collect();
    let a: BTreeSet<usize> = a.iter().copied().collect();
    if a.is_empty() {
        return Err(Error::EmptySelection);
    }
    if !a.is_subset(&active) {
        return Err(Error::InvalidComparison("selection contains inactive samples".into()));
    }
    let b: BTreeSet<usize> = match b {
        Some(b) => b.iter().copied().collect(),
        None => active.difference(&a).copied().collect(),
    };
    if b.is_empty() {
        return Err(Error::EmptySelection);
    }
    if !b.is_subset(&active) {
        return Err(Error::InvalidComparison("selection contains inactive samples".into()));
    }
    if !a.is_disjoint(&b) {
        return Err(Error::InvalidComparison("selections overlap".into()));
    }
    Ok((a.into_iter().collect(), b.into_iter().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplainConfig {
    /// Coalition budget; `None` means `min(2^M, 2048)`.
    pub coalitions: Option<usize>,
    pub background_size: usize,
    /// Selection-A rows explained; larger selections are subsampled.
    pub max_rows: usize,
    pub lambda: f64,
    /// Enumerate coalitions exactly (at most 12 factors).
    pub exact: bool,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            coalitions: None,
            background_size: 128,
            max_rows: 256,
            lambda: DEFAULT_LAMBDA,
            exact: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FactorScore {
    pub index: usize,
    pub name: String,
    pub kind: FactorKind,
    /// Mean absolute attribution over the explained rows.
    pub shap: f64,
    /// Mean signed attribution; positive pushes towards selection A.
    pub signed_shap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplanationResult {
    pub kind: FactorKind,
    /// Factors by descending `shap`.
    pub factors: Vec<FactorScore>,
    pub discriminator_accuracy: f64,
    pub count_a: usize,
    pub count_b: usize,
    pub explained_rows: usize,
    pub background_rows: usize,
    pub coalitions: usize,
    pub exact: bool,
    pub base_value: f64,
    pub local_accuracy_residual: f64,
}

/// Factor indices by descending `|shap|`, ties by index.
pub fn rank_factors(shap: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..shap.len()).collect();
    order.sort_by(|&i, &j| shap[j].abs().total_cmp(&shap[i].abs()).then(i.cmp(&j)));
    order
}

fn sample(rows: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if rows.len() <= k {
        return rows.to_vec();
    }
    let mut picked: Vec<usize> = rows.choose_multiple(rng, k).copied().collect();
    picked.sort_unstable();
    picked
}

/// Full explanation of `A` against `B` over the factor columns of `matrix`.
pub fn explain(
    matrix: ArrayView2<f64>,
    factors: &FactorSet,
    a: &[usize],
    b: &[usize],
    cfg: &ExplainConfig,
) -> Result<ExplanationResult> {
    if matrix.ncols() != factors.len() {
        return Err(Error::LengthMismatch {
            left: matrix.ncols(),
            right: factors.len(),
        });
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySelection);
    }
    if a.iter().any(|i| b.contains(i)) {
        return Err(Error::InvalidComparison("selections overlap".into()));
    }
    let rows: Vec<usize> = a.iter().chain(b).copied().collect();
    let y: Vec<bool> = (0..rows.len()).map(|i| i < a.len()).collect();
    let x = matrix.select(Axis(0), &rows);
    let model = train_discriminator(x.view(), &y, cfg.lambda)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let background_rows = sample(b, cfg.background_size.max(1), &mut rng);
    let explained = sample(a, cfg.max_rows.max(1), &mut rng);
    let background = matrix.select(Axis(0), &background_rows);
    let targets = matrix.select(Axis(0), &explained);
    let m = factors.len();
    let attributions = if cfg.exact {
        exact_shap(&model, targets.view(), background.view())?
    } else {
        let budget = cfg.coalitions.unwrap_or_else(|| default_coalitions(m));
        kernel_shap(&model, targets.view(), background.view(), budget, cfg.seed)?
    };

    let n = explained.len() as f64;
    let shap: Vec<f64> = attributions
        .values
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n)
        .collect();
    let signed: Vec<f64> = attributions.values.columns().into_iter().map(|c| c.sum() / n).collect();
    let scores = rank_factors(&shap)
        .into_iter()
        .map(|j| FactorScore {
            index: j,
            name: factors.factors[j].name.clone(),
            kind: factors.kind,
            shap: shap[j],
            signed_shap: signed[j],
        })
        .collect();
    Ok(ExplanationResult {
        kind: factors.kind,
        factors: scores,
        discriminator_accuracy: model.accuracy,
        count_a: a.len(),
        count_b: b.len(),
        explained_rows: explained.len(),
        background_rows: background_rows.len(),
        coalitions: attributions.coalitions,
        exact: attributions.exact,
        base_value: attributions.base_value,
        local_accuracy_residual: attributions.local_accuracy_residual(),
    })
}

/// Histogram of one factor column for the two selections.
pub fn factor_histogram(
    matrix: ArrayView2<f64>,
    factors: &FactorSet,
    factor: usize,
    a: &[usize],
    b: &[usize],
    bins: usize,
) -> Result<Histogram> {
    let f = factors
        .factors
        .get(factor)
        .ok_or_else(|| Error::UnknownFactor(factor.to_string()))?;
    let col = matrix.column(factor);
    let values = |rows: &[usize]| rows.iter().map(|&r| col[r]).collect::<Vec<f64>>();
    histogram(&values(a), &values(b), bins, f.binary)
}
