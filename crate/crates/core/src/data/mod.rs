//! Domain types for feature streams, narration timelines and word
//! embeddings, with their on-disk formats.

mod embedding;
mod features;
mod timeline;

pub use embedding::{embed_tokens, oov_vector, EmbeddingTable, NodeTensor};
pub use features::{load_features, save_features, Modality, ModalityFeatures};
pub use timeline::{load_token_timeline, save_token_timeline, TokenTimeline, PAD};
