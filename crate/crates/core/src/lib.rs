//! Conversation kernels: classify a comment using windows of its surrounding
//! discussion tree.
//!
//! A [`tree::ConversationTree`] is cut into [`kernel::WindowSet`]s, each window
//! is embedded through a pluggable [`embedding::EmbeddingProvider`], and a
//! [`model::ConversationKernel`] mixes per-window head predictions with a
//! learned softmax over windows.

pub mod embedding;
pub mod exec;
pub mod ingest;
pub mod kernel;
mod linalg;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod train;
pub mod tree;

pub use embedding::{Embedder, EmbeddingError, EmbeddingProvider, HashEmbedder, ProviderDescriptor};
pub use exec::Execution;
pub use ingest::{Corpus, IngestError, LabeledExample};
pub use kernel::{extract_windows, KernelFamily, KernelShape, WindowKind, WindowSet};
pub use metrics::{evaluate, EvalReport};
pub use model::{ConversationKernel, ModelConfig, ModelError, Prediction};
pub use train::{train, Checkpoint, TrainConfig, TrainError};
pub use tree::{Category, Comment, ConversationTree, TreeError};
