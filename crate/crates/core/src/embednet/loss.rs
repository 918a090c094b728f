//! Per-sample loss terms.
//!
//! These functions evaluate the losses directly from the embedding matrix and
//! are the reference the batched trainer is checked against.

use ndarray::ArrayView1;

use crate::embednet::model::EmbeddingModel;
use crate::error::{Error, Result};

/// Mean squared reconstruction error, `(1/d) Σ (pred − true)²`.
pub fn recon_loss(pred: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(truth.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Cosine similarity; a zero vector is 0-similar to everything.
pub fn similarity(p: ArrayView1<f64>, h: ArrayView1<f64>) -> f64 {
    let dot = p.dot(&h);
    let norms = p.dot(&p).sqrt() * h.dot(&h).sqrt();
    if norms == 0.0 {
        0.0
    } else {
        dot / norms
    }
}

/// Mean similarity between sample `i` and the other members of class `y`.
pub fn group_similarity(model: &EmbeddingModel, i: usize, y: usize, labels: &[Option<usize>]) -> Result<f64> {
    let hi = model.h.row(i);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, label) in labels.iter().enumerate() {
        if p != i && *label == Some(y) {
            sum += similarity(model.h.row(p), hi);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyGroupAfterExclusion { sample: i, class: y });
    }
    Ok(sum / count as f64)
}

fn num_classes(labels: &[Option<usize>]) -> usize {
    labels.iter().flatten().max().map_or(0, |m| m + 1)
}

/// Class whose members are most similar to sample `i` on average. Classes
/// with no member other than `i` are skipped; ties go to the lower id.
pub fn predict_label(model: &EmbeddingModel, i: usize, labels: &[Option<usize>]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for y in 0..num_classes(labels) {
        let s = match group_similarity(model, i, y, labels) {
            Ok(s) => s,
            Err(Error::EmptyGroupAfterExclusion { .. }) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((y, s));
        }
    }
    best.map(|(y, _)| y)
        .ok_or(Error::InvalidLabels(format!("sample {i} has no comparable class")))
}

/// Similarity to the predicted class minus similarity to the true class.
/// Non-negative, and zero exactly when the prediction is correct.
pub fn class_loss(model: &EmbeddingModel, i: usize, labels: &[Option<usize>]) -> Result<f64> {
    let truth = labels
        .get(i)
        .copied()
        .flatten()
        .ok_or_else(|| Error::InvalidLabels(format!("sample {i} is not labeled")))?;
    let own = group_similarity(model, i, truth, labels)?;
    let predicted = predict_label(model, i, labels)?;
    if predicted == truth {
        return Ok(0.0);
    }
    Ok(group_similarity(model, i, predicted, labels)? - own)
}

/// `alpha · lc + (1 − alpha) · lr`.
pub fn joint_loss(lr: f64, lc: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    // the unused term is dropped at the ends so a non-finite value in it
    // cannot leak through 0 · x
    Ok(if alpha == 0.0 {
        lr
    } else if alpha == 1.0 {
        lc
    } else {
        alpha * lc + (1.0 - alpha) * lr
    })
}
