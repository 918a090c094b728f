use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the analytics engine.
///
/// Variants are grouped by the module that raises them; the service layer maps
/// every variant to a 4xx status.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // dataset
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error at row {row}, column `{column}`: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    // knowledge
    #[error("attribute `{0}` has a degenerate value range")]
    DegenerateRange(String),
    #[error("invalid bin edges: {0}")]
    InvalidBins(String),
    #[error("no active samples")]
    NoActiveSamples,
    #[error("requested {requested} clusters but only {available} points")]
    TooManyClusters { requested: usize, available: usize },
    #[error("invalid node {0}")]
    InvalidNode(u32),
    #[error("group {0} contains no samples")]
    EmptyGroup(usize),
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),
    #[error("cannot delete the root node")]
    CannotDeleteRoot,
    #[error("knowledge tree has no valid classes")]
    NoValidClasses,

    // embednet
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("sample {sample} is the only member of class {class}")]
    EmptyGroupAfterExclusion { sample: usize, class: usize },
    #[error("invalid labels: {0}")]
    InvalidLabels(String),
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training cancelled after {epochs_done} epochs")]
    Cancelled { epochs_done: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    // projection
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid projection parameters: {0}")]
    InvalidProjectionParams(String),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    // explain
    #[error("no knowledge bins available for classification factors")]
    NoBins,
    #[error("class {class} has {size} samples, need at least 2")]
    ClassTooSmall { class: usize, size: usize },
    #[error("need at least {needed} coalitions, got {got}")]
    TooFewCoalitions { needed: usize, got: usize },
    #[error("empty selection")]
    EmptySelection,
    #[error("invalid comparison: {0}")]
    InvalidComparison(String),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
}
