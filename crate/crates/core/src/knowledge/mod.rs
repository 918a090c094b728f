//! Knowledge externalization: attribute discretization, bin grouping and the
//! class tree that turns an analyst's grouping into sample labels.

mod bins;
mod grouping;
mod tree;

pub use bins::{discretize, discretize_samples, Bin, BinLayout, BinSet};
pub use grouping::{group_features, suggest_grouping, GroupFeature};
pub use tree::{KnowledgeTree, LabelAssignment, Node, NodeId, Split, ROOT};
