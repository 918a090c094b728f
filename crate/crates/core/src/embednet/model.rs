use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Hyperparams {
    /// Weight of the classification loss (CLR / 100).
    pub alpha: f64,
    /// SGD step size.
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Embedding width `m`.
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            eta: 0.05,
            batch_size: 32,
            epochs: 100,
            embed_dim: 16,
            hidden_dim: 64,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Sets alpha from the slider percentage.
    pub fn with_clr_percent(mut self, percent: f64) -> Self {
        self.alpha = percent / 100.0;
        self
    }

    pub fn clr_percent(&self) -> f64 {
        self.alpha * 100.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidHyperparams(msg.to_owned()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad("eta must be positive and finite");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.embed_dim < 2 {
            return bad("embedding dimension must be at least 2");
        }
        if self.hidden_dim == 0 {
            return bad("hidden dimension must be at least 1");
        }
        Ok(())
    }
}

/// Per-sample embeddings plus the single-hidden-layer decoder.
///
/// There is no encoder: row `i` of `h` is the embedding of sample `i` and is
/// trained directly, so the embeddings are available as soon as training
/// stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    /// n × m embedding matrix.
    pub h: Array2<f64>,
    /// m × hidden.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// hidden × d.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// Number of SGD steps taken.
    pub step: u64,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng))
}

/// Random initial model; deterministic in `(n, d, hp)`.
pub fn init_model(n: usize, d: usize, hp: &Hyperparams) -> Result<EmbeddingModel> {
    hp.validate()?;
    if n < 2 {
        return Err(Error::InvalidHyperparams("need at least two samples".into()));
    }
    if d == 0 {
        return Err(Error::InvalidHyperparams("need at least one feature".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let emb = Uniform::new_inclusive(-0.1, 0.1);
    let h = Array2::from_shape_simple_fn((n, hp.embed_dim), || emb.sample(&mut rng));
    let w1 = glorot(&mut rng, hp.embed_dim, hp.hidden_dim);
    let w2 = glorot(&mut rng, hp.hidden_dim, d);
    Ok(EmbeddingModel {
        h,
        w1,
        b1: Array1::zeros(hp.hidden_dim),
        w2,
        b2: Array1::zeros(d),
        step: 0,
    })
}

impl EmbeddingModel {
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    /// Output (feature) dimensionality.
    pub fn d(&self) -> usize {
        self.w2.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.h.len() + self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|v| v.is_finite())
            && self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite())
    }
}

/// Reconstructs a feature vector from one embedding:
/// `W2ᵀ · relu(W1ᵀ · h + b1) + b2`.
pub fn decode(model: &EmbeddingModel, h: ArrayView1<f64>) -> Array1<f64> {
    let hidden = (h.dot(&model.w1) + &model.b1).mapv(|v| v.max(0.0));
    hidden.dot(&model.w2) + &model.b2
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hyperparams: Hyperparams,
    pub model: EmbeddingModel,
}

impl Checkpoint {
    pub fn new(hyperparams: Hyperparams, model: EmbeddingModel) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            hyperparams,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(json).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}
