//! L2-regularized logistic regression separating two sample sets.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 1e-3;
const GRAD_TOL: f64 = 1e-6;
const MAX_STEPS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub lambda: f64,
    /// Fraction of training rows classified correctly at threshold 0.5.
    pub accuracy: f64,
    pub steps: usize,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Discriminator {
    pub fn logit(&self, x: ArrayView1<f64>) -> f64 {
        self.weights.dot(&x) + self.bias
    }

    /// Probability of membership in the first set.
    pub fn predict(&self, x: ArrayView1<f64>) -> f64 {
        sigmoid(self.logit(x))
    }
}

/// Mean log-loss plus `λ/2 · |w|²` (bias unpenalized).
pub fn objective(x: ArrayView2<f64>, y: &[bool], w: &Array1<f64>, b: f64, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let data: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &t)| {
            let z = row.dot(w) + b;
            // log(1 + e^z) − t·z, computed stably
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - if t { z } else { 0.0 }
        })
        .sum();
    data / n + 0.5 * lambda * w.dot(w)
}

fn gradient(x: ArrayView2<f64>, y: &[bool], w: &Array1<f64>, b: f64, lambda: f64) -> (Array1<f64>, f64) {
    let n = x.nrows() as f64;
    let resid: Array1<f64> = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &t)| sigmoid(row.dot(w) + b) - f64::from(u8::from(t)))
        .collect();
    let gw = x.t().dot(&resid) / n + w * lambda;
    (gw, resid.sum() / n)
}

/// Fits the discriminator by Nesterov-accelerated gradient descent with a
/// fixed step from a Lipschitz bound, restarting momentum whenever the
/// objective rises. Stops once the gradient norm is below 1e-6 or after
/// 5000 steps.
pub fn train_discriminator(x: ArrayView2<f64>, y: &[bool], lambda: f64) -> Result<Discriminator> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    let pos = y.iter().filter(|&&t| t).count();
    for (class, size) in [(0, pos), (1, y.len() - pos)] {
        if size < 2 {
            return Err(Error::ClassTooSmall { class, size });
        }
    }
    let n = x.nrows() as f64;
    // the log-loss Hessian is bounded by XᵀX / (4n) on the augmented input
    let frob: f64 = x.iter().map(|v| v * v).sum::<f64>() + n;
    let step = 1.0 / (0.25 * frob / n + lambda);

    let d = x.ncols();
    let (mut w, mut b) = (Array1::zeros(d), 0.0);
    let (mut vw, mut vb) = (w.clone(), b);
    let mut t = 1.0f64;
    let mut f_prev = objective(x, y, &w, b, lambda);
    let mut steps = 0;
    while steps < MAX_STEPS {
        if steps % 10 == 0 {
            let (cw, cb) = gradient(x, y, &w, b, lambda);
            if (cw.dot(&cw) + cb * cb).sqrt() < GRAD_TOL {
                break;
            }
        }
        let (gw, gb) = gradient(x, y, &vw, vb, lambda);
        let nw = &vw - &(gw * step);
        let nb = vb - step * gb;
        let f = objective(x, y, &nw, nb, lambda);
        steps += 1;
        if f > f_prev {
            // restart from the current iterate without momentum
            vw = w.clone();
            vb = b;
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        vw = &nw + &((&nw - &w) * mom);
        vb = nb + (nb - b) * mom;
        w = nw;
        b = nb;
        t = t_next;
        f_prev = f;
    }
    let mut model = Discriminator {
        weights: w,
        bias: b,
        lambda,
        accuracy: 0.0,
        steps,
    };
    let correct = x
        .rows()
        .into_iter()
        .zip(y)
        .filter(|(row, &t)| (model.predict(*row) >= 0.5) == t)
        .count();
    model.accuracy = correct as f64 / n;
    Ok(model)
}
