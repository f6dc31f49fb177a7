//! The convolutional autoencoder/classifier, its optimizer and the training
//! regime (learning-rate halving, batch-size rule).

mod adam;
mod model;

pub use adam::{Adam, AdamConfig};
pub use model::{Forward, ModelConfig, ModelError, SreaModel, MIN_SEQ_LEN};

/// Epochs of a full training run.
pub const EPOCHS: usize = 100;

/// Learning rate at `epoch`: 0.01 halved every 20 epochs.
pub fn lr_at(epoch: usize) -> f64 {
    0.01 * 0.5f64.powi((epoch / 20) as i32)
}

/// Mini-batch size for `n` training samples: a tenth of the data, capped at
/// 128 and never below 1.
pub fn batch_size_for(n: usize) -> usize {
    (n / 10).clamp(1, 128)
}
