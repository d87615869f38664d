//! Branch combination, the end-to-end model, training, and checkpoints.

mod checkpoint;
mod model;
mod train;
mod weights;

pub use checkpoint::{
    decode_f64s, encode_f64s, Checkpoint, StoredTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use model::{ForwardVars, Head, ModelInput, Prediction, WetModel};
pub use train::{evaluate, train, EpochRecord, EvalSummary, Example, TrainingReport};
pub use weights::{average_outputs, derive_weights, weighted_combine, EnsembleWeights};
