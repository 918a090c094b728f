//! Wall-clock training benchmark.

use std::time::Instant;

use knowlens_core::dataset::normalize_matrix;
use knowlens_core::embednet::{init_model, train, Hyperparams};
use knowlens_core::knowledge::LabelAssignment;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{BenchError, Result};

/// Number of random classes in the timing data.
pub const TIMING_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub seconds: Vec<f64>,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl TimingStats {
    pub fn from_samples(mut seconds: Vec<f64>) -> Self {
        let mut sorted = seconds.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (sorted.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        let (median, q1, q3) = (q(0.5), q(0.25), q(0.75));
        seconds.shrink_to_fit();
        Self {
            seconds,
            median,
            q1,
            q3,
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Times `repeats` full training runs on uniform random features with
/// random labels. Data generation and model initialization are not timed.
pub fn bench_train(n: usize, dims: usize, hp: &Hyperparams, repeats: usize, seed: u64) -> Result<TimingStats> {
    if repeats < 3 {
        return Err(BenchError::Config(format!("need at least 3 repeats, got {repeats}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = normalize_matrix(Array2::from_shape_simple_fn((n, dims), || rng.gen::<f64>()));
    let classes = TIMING_CLASSES.min(n / 2).max(1);
    // every class gets at least two members, the rest are random
    let mut dense: Vec<usize> = (0..n)
        .map(|i| {
            if i < 2 * classes {
                i % classes
            } else {
                rng.gen_range(0..classes)
            }
        })
        .collect();
    dense.rotate_left(rng.gen_range(0..n));
    let labels = LabelAssignment::from_dense(&dense)?;
    let hp = Hyperparams {
        batch_size: hp.batch_size.min(n),
        ..*hp
    };
    let mut seconds = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let model = init_model(n, dims, &hp)?;
        let start = Instant::now();
        let (model, _) = train(model, &features, &labels, &hp, |_| true)?;
        seconds.push(start.elapsed().as_secs_f64());
        std::hint::black_box(model);
    }
    Ok(TimingStats::from_samples(seconds))
}
