//! Knowledge-guided embedding for visual analytics.
//!
//! The crate covers the analysis path end to end: ingest a table
//! ([`dataset`]), turn analyst groupings into labels ([`knowledge`]), learn
//! per-sample embeddings with a joint reconstruction and classification loss
//! ([`embednet`]), project them to 2D ([`projection`]) and explain selected
//! structures with Shapley values ([`explain`]).

pub mod cluster;
pub mod dataset;
pub mod embednet;
pub mod error;
pub mod explain;
pub mod knowledge;
pub mod projection;

pub use error::{Error, Result};
