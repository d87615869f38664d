//! The text branch (parallel transformer blocks over token embeddings) and
//! the feature branch (lag/forecast arrangement, LSTM embedding, ProbSparse
//! encoder layers).

mod feature;
mod lstm;
mod text;
mod window;

pub use feature::{FeatureBranch, FeatureEncoderLayer, FEATURE_MAGNITUDE_LIMIT};
pub use lstm::Lstm;
pub use text::{EmbeddedSequence, TextBlock, TextBranch};
pub use window::{supervised_transform, SupervisedWindow};
