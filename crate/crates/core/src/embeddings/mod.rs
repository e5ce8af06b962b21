//! Text embeddings: encoders, the binary embedding store, and the
//! structure-free cosine-similarity baseline retriever.

mod cosine;
mod encoder;
mod store;

pub use cosine::{cosine, cosine_baseline_scores, triple_text, BaselineMode, EmbeddingLookup};
pub use encoder::{embed_texts, tokenize, HashEncoder, HttpEncoder, TextEncoder};
pub use store::EmbeddingStore;
