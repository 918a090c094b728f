//! Mini-batch SGD over embeddings and decoder weights.
//!
//! For every batch the class statistics are taken from a snapshot of the
//! embedding matrix at batch start. Sample `i`'s classification loss then
//! depends on its own row only, with the group members held constant, so the
//! batch objective
//!
//! `L = (1/k) Σ_i [α ℓc(i) + (1 − α) ℓr(i)]`
//!
//! has a well-defined gradient with respect to the batch rows of `H` and the
//! decoder parameters. Both are updated with plain SGD.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::embednet::model::{EmbeddingModel, Hyperparams};
use crate::error::{Error, Result};
use crate::knowledge::LabelAssignment;

/// Class statistics of an embedding snapshot: unit vectors per sample and
/// their per-class sums over labeled samples.
#[derive(Debug, Clone)]
pub struct Snapshot {
    units: Array2<f64>,
    sums: Array2<f64>,
    counts: Vec<usize>,
}

impl Snapshot {
    pub fn new(h: &Array2<f64>, labels: &[Option<usize>], num_classes: usize) -> Self {
        let mut units = h.clone();
        for mut row in units.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row /= norm;
            } else {
                row.fill(0.0);
            }
        }
        let mut sums = Array2::zeros((num_classes, h.ncols()));
        let mut counts = vec![0usize; num_classes];
        for (i, label) in labels.iter().enumerate() {
            if let Some(y) = *label {
                let mut s = sums.row_mut(y);
                s += &units.row(i);
                counts[y] += 1;
            }
        }
        Self { units, sums, counts }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    /// Mean unit vector of class `y` without sample `i`; `None` if `i` is the
    /// only member.
    fn class_mean(&self, y: usize, i: usize, own: usize) -> Option<Array1<f64>> {
        let mut sum = self.sums.row(y).to_owned();
        let mut count = self.counts[y];
        if y == own {
            sum -= &self.units.row(i);
            count -= 1;
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Classification loss of one sample against a snapshot, its predicted class,
/// and the gradient of the loss with respect to the sample's embedding.
pub fn class_term(h: ArrayView1<f64>, i: usize, own: usize, snapshot: &Snapshot) -> (f64, Option<usize>, Array1<f64>) {
    let norm = h.dot(&h).sqrt();
    let unit = if norm > 0.0 { &h / norm } else { Array1::zeros(h.len()) };
    let mut best: Option<(usize, f64, Array1<f64>)> = None;
    let mut own_term: Option<(f64, Array1<f64>)> = None;
    for y in 0..snapshot.num_classes() {
        let Some(mean) = snapshot.class_mean(y, i, own) else {
            continue;
        };
        let s = unit.dot(&mean);
        if best.as_ref().is_none_or(|(_, b, _)| s > *b) {
            best = Some((y, s, mean.clone()));
        }
        if y == own {
            own_term = Some((s, mean));
        }
    }
    let (Some((pred, best_s, best_mean)), Some((own_s, own_mean))) = (best, own_term) else {
        // singleton class: nothing to compare against
        return (0.0, None, Array1::zeros(h.len()));
    };
    if pred == own || norm == 0.0 {
        return (0.0, Some(pred), Array1::zeros(h.len()));
    }
    // d(û·v)/dh = (v − (û·v) û) / |h|
    let v = best_mean - own_mean;
    let proj = unit.dot(&v);
    let grad = (v - &unit * proj) / norm;
    (best_s - own_s, Some(pred), grad)
}

/// Loss totals for one batch. `recon`, `class` and `total` are sums over the
/// batch; divide by `size` for means.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    pub size: usize,
    pub recon: f64,
    pub class: f64,
    pub total: f64,
    pub correct: usize,
}

impl BatchLoss {
    /// The batch objective `L` (mean joint loss).
    pub fn objective(&self) -> f64 {
        self.total / self.size as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// One row per batch sample, in batch order.
    pub h_rows: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Feature columns processed per output-layer tile. A 64 × 512 slice of
/// `W2` stays in cache while it is read, differentiated and updated.
const TILE: usize = 512;

enum Sink<'a> {
    Step(f64),
    Collect(&'a mut Array2<f64>, &'a mut Array1<f64>),
}

/// Output layer over the batch, tiled across feature columns. Returns the
/// per-row squared reconstruction error sums and the gradient reaching the
/// hidden activations. `scale` turns `out − x` into `∂L/∂out`.
fn output_pass(
    w2: &mut Array2<f64>,
    b2: &mut Array1<f64>,
    hidden: &Array2<f64>,
    x: &Array2<f64>,
    batch: &[usize],
    scale: f64,
    mut sink: Sink,
) -> (Vec<f64>, Array2<f64>) {
    let d = w2.ncols();
    let mut sq = vec![0.0; batch.len()];
    let mut g_hidden = Array2::zeros((batch.len(), w2.nrows()));
    let mut buf = Array2::zeros((batch.len(), TILE.min(d)));
    for c0 in (0..d).step_by(TILE) {
        let c1 = (c0 + TILE).min(d);
        let mut g_out = buf.slice_mut(s![.., ..c1 - c0]);
        general_mat_mul(1.0, hidden, &w2.slice(s![.., c0..c1]), 0.0, &mut g_out);
        for (r, &i) in batch.iter().enumerate() {
            let mut row = g_out.row_mut(r);
            row += &b2.slice(s![c0..c1]);
            row -= &x.slice(s![i, c0..c1]);
            sq[r] += row.dot(&row);
            row *= scale;
        }
        general_mat_mul(1.0, &g_out, &w2.slice(s![.., c0..c1]).t(), 1.0, &mut g_hidden);
        let gb = g_out.sum_axis(Axis(0));
        match &mut sink {
            Sink::Step(eta) => {
                general_mat_mul(-*eta, &hidden.t(), &g_out, 1.0, &mut w2.slice_mut(s![.., c0..c1]));
                b2.slice_mut(s![c0..c1]).scaled_add(-*eta, &gb);
            }
            Sink::Collect(gw2, gb2) => {
                general_mat_mul(1.0, &hidden.t(), &g_out, 0.0, &mut gw2.slice_mut(s![.., c0..c1]));
                gb2.slice_mut(s![c0..c1]).assign(&gb);
            }
        }
    }
    (sq, g_hidden)
}

struct Pass {
    loss: BatchLoss,
    hb: Array2<f64>,
    /// `∂L/∂pre` of the hidden layer.
    g_pre: Array2<f64>,
    /// `∂L/∂h` of every batch row.
    g_h: Array2<f64>,
}

/// One forward/backward pass. With `Sink::Step` the output layer is
/// updated in place; `W1`, `b1` and `H` are left to the caller.
#[allow(clippy::too_many_arguments)]
fn pass(
    h: &Array2<f64>,
    w1: &Array2<f64>,
    b1: &Array1<f64>,
    w2: &mut Array2<f64>,
    b2: &mut Array1<f64>,
    features: &FeatureMatrix,
    labels: &[Option<usize>],
    snapshot: &Snapshot,
    batch: &[usize],
    alpha: f64,
    sink: Sink,
) -> Pass {
    let k = batch.len() as f64;
    let d = w2.ncols() as f64;
    let hb = h.select(Axis(0), batch);
    let pre = hb.dot(w1) + b1;
    let hidden = pre.mapv(|v| v.max(0.0));

    let scale = 2.0 * (1.0 - alpha) / (k * d);
    let (sq, mut g_pre) = output_pass(w2, b2, &hidden, &features.values, batch, scale, sink);
    g_pre.zip_mut_with(&pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    let mut g_h = g_pre.dot(&w1.t());

    let mut loss = BatchLoss {
        size: batch.len(),
        ..Default::default()
    };
    for (r, &i) in batch.iter().enumerate() {
        let own = labels[i].expect("batches contain labeled samples only");
        let lr = sq[r] / d;
        let (lc, pred, grad) = class_term(hb.row(r), i, own, snapshot);
        if pred.is_none_or(|p| p == own) {
            loss.correct += 1;
        }
        loss.recon += lr;
        loss.class += lc;
        loss.total += alpha * lc + (1.0 - alpha) * lr;
        if alpha > 0.0 {
            g_h.row_mut(r).scaled_add(alpha / k, &grad);
        }
    }
    Pass { loss, hb, g_pre, g_h }
}

/// Batch loss with the class statistics frozen in `snapshot`.
pub fn batch_loss(
    model: &EmbeddingModel,
    features: &FeatureMatrix,
    labels: &[Option<usize>],
    snapshot: &Snapshot,
    batch: &[usize],
    alpha: f64,
) -> BatchLoss {
    batch_gradients(model, features, labels, snapshot, batch, alpha).0
}

/// Batch loss and the analytic gradient of the batch objective.
pub fn batch_gradients(
    model: &EmbeddingModel,
    features: &FeatureMatrix,
    labels: &[Option<usize>],
    snapshot: &Snapshot,
    batch: &[usize],
    alpha: f64,
) -> (BatchLoss, Gradients) {
    let (mut w2, mut b2) = (model.w2.clone(), model.b2.clone());
    let mut gw2 = Array2::zeros(w2.dim());
    let mut gb2 = Array1::zeros(b2.len());
    let p = pass(
        &model.h,
        &model.w1,
        &model.b1,
        &mut w2,
        &mut b2,
        features,
        labels,
        snapshot,
        batch,
        alpha,
        Sink::Collect(&mut gw2, &mut gb2),
    );
    let grads = Gradients {
        w1: p.hb.t().dot(&p.g_pre),
        b1: p.g_pre.sum_axis(Axis(0)),
        h_rows: p.g_h,
        w2: gw2,
        b2: gb2,
    };
    (p.loss, grads)
}

/// Epoch summary; losses are means over the epoch's samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LossReport {
    pub epoch: usize,
    pub recon: f64,
    pub class: f64,
    pub total: f64,
    /// Fraction of samples whose predicted class equals their label.
    pub training_accuracy: f64,
}

fn check_inputs(
    model: &EmbeddingModel,
    features: &FeatureMatrix,
    labels: &LabelAssignment,
    hp: &Hyperparams,
) -> Result<()> {
    hp.validate()?;
    if features.n() != model.n() || labels.labels.len() != model.n() {
        return Err(Error::LengthMismatch {
            left: model.n(),
            right: features.n(),
        });
    }
    if features.d() != model.d() {
        return Err(Error::LengthMismatch {
            left: model.d(),
            right: features.d(),
        });
    }
    if let Some(bad) = labels.labels.iter().flatten().find(|&&y| y >= labels.num_classes()) {
        return Err(Error::InvalidLabels(format!("class id {bad} out of range")));
    }
    if labels.active_count == 0 {
        return Err(Error::NoActiveSamples);
    }
    if hp.batch_size > labels.active_count {
        return Err(Error::InvalidHyperparams(format!(
            "batch size {} exceeds {} active samples",
            hp.batch_size, labels.active_count
        )));
    }
    if hp.alpha > 0.0 && labels.num_classes() < 2 {
        return Err(Error::InvalidLabels(
            "the classification loss needs at least two classes".into(),
        ));
    }
    Ok(())
}

/// The sample order used for `epoch`: active samples shuffled by a stream of
/// the seed dedicated to that epoch.
pub fn epoch_order(labels: &LabelAssignment, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = labels.active_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    order.shuffle(&mut rng);
    order
}

pub fn train_epoch(
    model: &mut EmbeddingModel,
    features: &FeatureMatrix,
    labels: &LabelAssignment,
    hp: &Hyperparams,
    epoch: usize,
) -> Result<LossReport> {
    check_inputs(model, features, labels, hp)?;
    let order = epoch_order(labels, hp.seed, epoch);
    run_epoch(model, features, labels, hp, epoch, &order)
}

/// Like [`train_epoch`] but with a caller-chosen sample order.
pub fn train_epoch_with_order(
    model: &mut EmbeddingModel,
    features: &FeatureMatrix,
    labels: &LabelAssignment,
    hp: &Hyperparams,
    epoch: usize,
    order: &[usize],
) -> Result<LossReport> {
    check_inputs(model, features, labels, hp)?;
    if order.iter().any(|&i| labels.labels.get(i).copied().flatten().is_none()) {
        return Err(Error::InvalidLabels("order contains an unlabeled sample".into()));
    }
    run_epoch(model, features, labels, hp, epoch, order)
}

fn run_epoch(
    model: &mut EmbeddingModel,
    features: &FeatureMatrix,
    labels: &LabelAssignment,
    hp: &Hyperparams,
    epoch: usize,
    order: &[usize],
) -> Result<LossReport> {
    let mut acc = BatchLoss::default();
    for batch in order.chunks(hp.batch_size) {
        let snapshot = Snapshot::new(&model.h, &labels.labels, labels.num_classes());
        let p = pass(
            &model.h,
            &model.w1,
            &model.b1,
            &mut model.w2,
            &mut model.b2,
            features,
            &labels.labels,
            &snapshot,
            batch,
            hp.alpha,
            Sink::Step(hp.eta),
        );
        let loss = p.loss;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        general_mat_mul(-hp.eta, &p.hb.t(), &p.g_pre, 1.0, &mut model.w1);
        model.b1.scaled_add(-hp.eta, &p.g_pre.sum_axis(Axis(0)));
        for (r, &i) in batch.iter().enumerate() {
            model.h.row_mut(i).scaled_add(-hp.eta, &p.g_h.row(r));
        }
        model.step += 1;
        acc.size += loss.size;
        acc.recon += loss.recon;
        acc.class += loss.class;
        acc.total += loss.total;
        acc.correct += loss.correct;
    }
    if !model.is_finite() {
        return Err(Error::NonFiniteLoss { epoch });
    }
    let n = acc.size as f64;
    Ok(LossReport {
        epoch,
        recon: acc.recon / n,
        class: acc.class / n,
        total: acc.total / n,
        training_accuracy: acc.correct as f64 / n,
    })
}

/// Runs `hp.epochs` epochs. The callback sees every epoch report and
/// returns `false` to cancel; the trained embeddings are `model.h`.
pub fn train<F>(
    mut model: EmbeddingModel,
    features: &FeatureMatrix,
    labels: &LabelAssignment,
    hp: &Hyperparams,
    mut progress: F,
) -> Result<(EmbeddingModel, Vec<LossReport>)>
where
    F: FnMut(&LossReport) -> bool,
{
    check_inputs(&model, features, labels, hp)?;
    let mut reports = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        let report = train_epoch(&mut model, features, labels, hp, epoch)?;
        reports.push(report);
        if !progress(&report) {
            return Err(Error::Cancelled { epochs_done: epoch + 1 });
        }
    }
    Ok((model, reports))
}

/// Initializes and trains in one go.
pub fn fit(
    features: &FeatureMatrix,
    labels: &LabelAssignment,
    hp: &Hyperparams,
) -> Result<(EmbeddingModel, Vec<LossReport>)> {
    let model = crate::embednet::init_model(features.n(), features.d(), hp)?;
    train(model, features, labels, hp, |_| true)
}
