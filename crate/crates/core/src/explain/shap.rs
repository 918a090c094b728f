//! Shapley attributions of the discriminator over factor columns.
//!
//! The value of a coalition `S` for row `x` is the mean discriminator output
//! over background rows `b` with `x` substituted on `S`. Kernel SHAP fits the
//! attributions by weighted least squares with the efficiency constraint
//! built in; exact mode enumerates every coalition.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::explain::discriminator::{sigmoid, Discriminator};

/// Largest factor count explained exactly.
pub const MAX_EXACT_FACTORS: usize = 12;
pub const MAX_COALITIONS: usize = 2048;

/// Default coalition budget `min(2^M, 2048)`.
pub fn default_coalitions(m: usize) -> usize {
    if m >= 11 {
        MAX_COALITIONS
    } else {
        1 << m
    }
}

/// Coalition masks with their regression weights.
#[derive(Debug, Clone)]
struct Design {
    masks: Vec<Vec<bool>>,
    /// `(Z̃ᵀWZ̃)⁻¹Z̃ᵀW`, one column per coalition, for the reduced system
    /// in which the last attribution is eliminated.
    projection: Array2<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn kernel_weight(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64)
}

fn coalitions(m: usize, budget: usize, seed: u64) -> (Vec<Vec<bool>>, Vec<f64>) {
    let all = (1usize << m.min(63)).saturating_sub(2);
    if m < 63 && budget >= all {
        let masks: Vec<Vec<bool>> = (1..(1usize << m) - 1)
            .map(|bits| (0..m).map(|j| bits >> j & 1 == 1).collect())
            .collect();
        let weights = masks
            .iter()
            .map(|z| kernel_weight(m, z.iter().filter(|&&b| b).count()))
            .collect();
        return (masks, weights);
    }
    // sample coalition sizes in proportion to their total kernel weight,
    // then members uniformly; each draw carries equal weight
    let size_mass: Vec<f64> = (1..m).map(|s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
    let total: f64 = size_mass.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks = Vec::with_capacity(budget);
    for _ in 0..budget {
        let mut u = rng.gen::<f64>() * total;
        let mut s = m - 1;
        for (i, w) in size_mass.iter().enumerate() {
            if u < *w {
                s = i + 1;
                break;
            }
            u -= w;
        }
        let mut idx: Vec<usize> = (0..m).collect();
        let mut z = vec![false; m];
        for k in 0..s {
            let pick = rng.gen_range(k..m);
            idx.swap(k, pick);
            z[idx[k]] = true;
        }
        masks.push(z);
    }
    let weights = vec![1.0; masks.len()];
    (masks, weights)
}

/// Solves `a · x = b` for symmetric positive definite `a` by Cholesky,
/// with a tiny diagonal jitter if needed.
fn spd_solve_columns(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]]).fold(0.0, f64::max).max(1e-300);
    let mut jitter = 0.0;
    let l = loop {
        let mut l = Array2::<f64>::zeros((n, n));
        let mut ok = true;
        'outer: for i in 0..n {
            for j in 0..=i {
                let mut sum = a[[i, j]] + if i == j { jitter } else { 0.0 };
                for k in 0..j {
                    sum -= l[[i, k]] * l[[j, k]];
                }
                if i == j {
                    if sum <= 0.0 {
                        ok = false;
                        break 'outer;
                    }
                    l[[i, i]] = sum.sqrt();
                } else {
                    l[[i, j]] = sum / l[[j, j]];
                }
            }
        }
        if ok {
            break l;
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
    };
    let mut x = b.clone();
    for mut col in x.columns_mut() {
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[[i, k]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l[[k, i]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
    }
    x
}

impl Design {
    fn new(m: usize, budget: usize, seed: u64) -> Self {
        let (masks, weights) = coalitions(m, budget, seed);
        let r = m - 1;
        // reduced regressors z_j − z_last for j < last
        let z = Array2::from_shape_fn((masks.len(), r), |(c, j)| {
            f64::from(u8::from(masks[c][j])) - f64::from(u8::from(masks[c][r]))
        });
        let w = Array1::from(weights);
        let zw = &z.t() * &w;
        let gram = zw.dot(&z);
        let projection = spd_solve_columns(&gram, &zw);
        Self { masks, projection }
    }
}

/// Precomputed value function of a logistic discriminator: for every
/// coalition and background row, the logit contribution of the
/// background on the absent factors.
struct LinearValue<'a> {
    model: &'a Discriminator,
    background: ArrayView2<'a, f64>,
    base: f64,
}

impl<'a> LinearValue<'a> {
    fn new(model: &'a Discriminator, background: ArrayView2<'a, f64>) -> Self {
        let base = background.rows().into_iter().map(|b| model.predict(b)).sum::<f64>() / background.nrows() as f64;
        Self {
            model,
            background,
            base,
        }
    }

    /// Logit offset of each background row restricted to the factors where
    /// `mask` is false.
    fn absent_offsets(&self, mask: &[bool]) -> Vec<f64> {
        let w = &self.model.weights;
        self.background
            .rows()
            .into_iter()
            .map(|b| {
                self.model.bias
                    + mask
                        .iter()
                        .zip(w.iter().zip(b.iter()))
                        .filter(|(&present, _)| !present)
                        .map(|(_, (w, b))| w * b)
                        .sum::<f64>()
            })
            .collect()
    }

    fn value(&self, x: ArrayView1<f64>, mask: &[bool], offsets: &[f64]) -> f64 {
        let w = &self.model.weights;
        let present: f64 = mask
            .iter()
            .zip(w.iter().zip(x.iter()))
            .filter(|(&p, _)| p)
            .map(|(_, (w, x))| w * x)
            .sum();
        offsets.iter().map(|o| sigmoid(o + present)).sum::<f64>() / offsets.len() as f64
    }
}

/// Per-row attributions (rows × factors) and the background expectation.
#[derive(Debug, Clone)]
pub struct Attributions {
    pub values: Array2<f64>,
    pub base_value: f64,
    /// Model output of each explained row.
    pub outputs: Array1<f64>,
    pub exact: bool,
    pub coalitions: usize,
}

impl Attributions {
    /// Largest deviation from `Σ φ = f(x) − E[f]` over the rows.
    pub fn local_accuracy_residual(&self) -> f64 {
        self.values
            .rows()
            .into_iter()
            .zip(self.outputs.iter())
            .map(|(phi, f)| (phi.sum() - (f - self.base_value)).abs())
            .fold(0.0, f64::max)
    }
}

fn check(model: &Discriminator, x: ArrayView2<f64>, background: ArrayView2<f64>) -> Result<()> {
    let m = model.weights.len();
    if x.ncols() != m || background.ncols() != m {
        return Err(Error::LengthMismatch {
            left: m,
            right: x.ncols().max(background.ncols()),
        });
    }
    if background.nrows() == 0 || x.nrows() == 0 || m == 0 {
        return Err(Error::EmptySelection);
    }
    Ok(())
}

/// Kernel SHAP with `n_coalitions` coalitions (all of them when the budget
/// covers every proper non-empty subset, in which case the result is exact).
pub fn kernel_shap(
    model: &Discriminator,
    x: ArrayView2<f64>,
    background: ArrayView2<f64>,
    n_coalitions: usize,
    seed: u64,
) -> Result<Attributions> {
    check(model, x, background)?;
    let m = model.weights.len();
    if n_coalitions < 2 * m {
        return Err(Error::TooFewCoalitions {
            needed: 2 * m,
            got: n_coalitions,
        });
    }
    let vf = LinearValue::new(model, background);
    let outputs: Array1<f64> = x.rows().into_iter().map(|r| model.predict(r)).collect();
    if m == 1 {
        let values = outputs.mapv(|f| f - vf.base).insert_axis(ndarray::Axis(1));
        return Ok(Attributions {
            values,
            base_value: vf.base,
            outputs,
            exact: true,
            coalitions: 0,
        });
    }
    let design = Design::new(m, n_coalitions, seed);
    let offsets: Vec<Vec<f64>> = design.masks.iter().map(|z| vf.absent_offsets(z)).collect();
    let mut values = Array2::zeros((x.nrows(), m));
    for (r, row) in x.rows().into_iter().enumerate() {
        let delta = outputs[r] - vf.base;
        let target: Array1<f64> = design
            .masks
            .iter()
            .zip(&offsets)
            .map(|(z, off)| vf.value(row, z, off) - vf.base - if z[m - 1] { delta } else { 0.0 })
            .collect();
        let reduced = design.projection.dot(&target);
        let mut phi = values.row_mut(r);
        phi.slice_mut(ndarray::s![..m - 1]).assign(&reduced);
        phi[m - 1] = delta - reduced.sum();
    }
    let all = (1usize << m.min(63)).saturating_sub(2);
    Ok(Attributions {
        values,
        base_value: vf.base,
        outputs,
        exact: m < 63 && n_coalitions >= all,
        coalitions: design.masks.len(),
    })
}

/// Shapley values by enumerating every coalition; `M ≤ 12`.
pub fn exact_shap(model: &Discriminator, x: ArrayView2<f64>, background: ArrayView2<f64>) -> Result<Attributions> {
    check(model, x, background)?;
    let m = model.weights.len();
    if m > MAX_EXACT_FACTORS {
        return Err(Error::InvalidComparison(format!(
            "exact Shapley values need at most {MAX_EXACT_FACTORS} factors, got {m}"
        )));
    }
    let vf = LinearValue::new(model, background);
    let subsets = 1usize << m;
    let masks: Vec<Vec<bool>> = (0..subsets)
        .map(|bits| (0..m).map(|j| bits >> j & 1 == 1).collect())
        .collect();
    let offsets: Vec<Vec<f64>> = masks.iter().map(|z| vf.absent_offsets(z)).collect();
    let fact: Vec<f64> = (0..=m)
        .scan(1.0, |acc, i| {
            if i > 0 {
                *acc *= i as f64;
            }
            Some(*acc)
        })
        .collect();
    let outputs: Array1<f64> = x.rows().into_iter().map(|r| model.predict(r)).collect();
    let mut values = Array2::zeros((x.nrows(), m));
    for (r, row) in x.rows().into_iter().enumerate() {
        let v: Vec<f64> = masks.iter().zip(&offsets).map(|(z, o)| vf.value(row, z, o)).collect();
        for j in 0..m {
            let mut phi = 0.0;
            for bits in 0..subsets {
                if bits >> j & 1 == 1 {
                    continue;
                }
                let s = bits.count_ones() as usize;
                let weight = fact[s] * fact[m - s - 1] / fact[m];
                phi += weight * (v[bits | 1 << j] - v[bits]);
            }
            values[[r, j]] = phi;
        }
    }
    Ok(Attributions {
        values,
        base_value: vf.base,
        outputs,
        exact: true,
        coalitions: subsets,
    })
}
