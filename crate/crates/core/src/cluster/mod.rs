//! Clustering primitives shared by grouping suggestions and the
//! clustering-accuracy protocol.

mod assignment;
mod kmeans;

pub use assignment::max_weight_assignment;
pub use kmeans::{kmeans, sse, KMeansConfig, KMeansFit};
