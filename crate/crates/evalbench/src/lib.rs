//! Reproducible experiments for the embedding engine: grouped synthetic
//! data, clustering accuracy under optimal matching, training-time
//! benchmarks, and a config-driven runner that writes CSV reports.

pub mod accuracy;
pub mod experiment;
pub mod fuzz;
pub mod libras;
pub mod metrics;
pub mod synth;
pub mod timing;

pub use accuracy::{clustering_accuracy, matched_accuracy};
pub use fuzz::{fuzz_dataset, knowledge_fuzz, FuzzReport};
pub use synth::{gen_synthetic, GroupSpec, SyntheticSpec};
pub use timing::{bench_train, TimingStats};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Core(#[from] knowlens_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
