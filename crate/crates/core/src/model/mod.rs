//! Decoder-only transformer: parameters, exact gradients, Adam, training
//! loop and the binary checkpoint format.

mod adam;
mod checkpoint;
mod params;
mod scalar;
mod train;
mod transformer;

pub use adam::{Adam, AdamSettings};
pub use checkpoint::{
    checkpoint_path, list_checkpoints, load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointError,
    CheckpointRecord, DataCursor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use params::{Block, Parameters, Tensor};
pub use scalar::Scalar;
pub use train::{train, TrainSettings, TrainSummary, Trainer, TRAIN_LOG};
pub use transformer::ForwardPass;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub context_len: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [self.n_layers, self.n_heads, self.d_model, self.d_ff, self.context_len, self.vocab_size];
        if counts.contains(&0) {
            return Err(ModelError::InvalidConfig("all sizes must be at least 1".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds the context length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("padding must be a prefix of the sequence (left padding)")]
    BadPadMask,
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("shape mismatch: {0}")]
    BadShape(String),
    #[error("batch has no non-pad target")]
    AllPad,
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("parameters became non-finite after step {0}")]
    NonFiniteParameters(u64),
    #[error("training data: {0}")]
    Data(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
