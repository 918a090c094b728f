//! 2D layouts of the embedding matrix and lasso selection over them.

mod lasso;
mod neighbor;
mod pca;

pub use lasso::{lasso_select, point_in_polygon};
pub use neighbor::{neighbor_embedding, NeighborParams};
pub use pca::{pca, symmetric_eigen};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMethod {
    Pca,
    NeighborEmbedding,
}

impl std::str::FromStr for ProjectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Self::Pca),
            "neighbor-embedding" | "umap" => Ok(Self::NeighborEmbedding),
            other => Err(Error::InvalidProjectionParams(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Projection {
    /// One `[x, y]` row per projected sample, in input row order.
    pub coords: Array2<f64>,
    pub method: ProjectionMethod,
    pub params: NeighborParams,
    pub seed: u64,
    /// Training step of the model the layout was computed from.
    pub model_step: u64,
    /// Set when PCA found no variance; every point then sits at the origin.
    pub degenerate: bool,
}

impl Projection {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }
}

/// Projects the rows of `h` to 2D. PCA ignores `params` and `seed`.
pub fn project(h: ArrayView2<f64>, method: ProjectionMethod, params: &NeighborParams, seed: u64) -> Result<Projection> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidProjectionParams("embedding has non-finite values".into()));
    }
    let (coords, degenerate) = match method {
        ProjectionMethod::Pca => {
            if h.nrows() == 0 {
                return Err(Error::TooFewSamples { needed: 1, got: 0 });
            }
            pca(h)
        }
        ProjectionMethod::NeighborEmbedding => (neighbor_embedding(h, params, seed)?, false),
    };
    Ok(Projection {
        coords,
        method,
        params: params.clone(),
        seed,
        model_step: 0,
        degenerate,
    })
}

/// Min-max scales each axis to `[0, 1]`; a constant axis maps to 0.5.
pub fn to_viewport(coords: ArrayView2<f64>) -> Array2<f64> {
    let mut out = coords.to_owned();
    for mut col in out.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            col.mapv_inplace(|v| (v - lo) / (hi - lo));
        } else {
            col.fill(0.5);
        }
    }
    out
}
