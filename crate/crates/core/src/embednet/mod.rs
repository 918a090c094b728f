//! Encoder-free embedding network.
//!
//! Each sample owns a trainable embedding row. A small decoder maps
//! embeddings back to the normalized features, and a nonparametric
//! group-similarity classifier pulls samples towards their class.

mod loss;
mod model;
mod train;

pub use loss::{class_loss, group_similarity, joint_loss, predict_label, recon_loss, similarity};
pub use model::{decode, init_model, Checkpoint, EmbeddingModel, Hyperparams};
pub use train::{
    batch_gradients, batch_loss, class_term, epoch_order, fit, train, train_epoch, train_epoch_with_order, BatchLoss,
    Gradients, LossReport, Snapshot,
};
