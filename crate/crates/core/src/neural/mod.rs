//! Dense feed-forward networks in double precision: ReLU hidden layers,
//! sigmoid or linear head, backpropagation and Adam.

mod checkpoint;
mod model;
mod optim;

use thiserror::Error;

pub use checkpoint::{
    decode_weights, encode_weights, load_checkpoint, load_manifest, save_checkpoint, save_checkpoint_with, Checkpoint,
    Manifest, CHECKPOINT_FORMAT_VERSION, MANIFEST_FILE, WEIGHTS_FILE,
};
pub(crate) use checkpoint::{replace_dir, staging_path};
pub use model::{
    init_model, loss, sigmoid, Activation, Dense, Gradients, LossKind, MlpConfig, MlpModel,
    OutputHead, BCE_CLIP,
};
pub use optim::{adam_step, train_epoch, AdamState, EpochStats, BETA1, BETA2, EPSILON};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("i/o error: {0}")]
    Io(String),
    #[error("checkpoint format version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt weights: {0}")]
    CorruptWeights(String),
}
