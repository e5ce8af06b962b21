//! Retrieval-augmented question answering over a knowledge graph: weak
//! supervision from shortest paths, directional distance features, a
//! lightweight triple scorer, an LLM reasoner, and evaluation.

pub mod embeddings;
pub mod error;
pub mod evalkit;
mod http;
mod io;
pub mod kg;
pub mod mock;
pub mod pipeline;
pub mod reasoner;
pub mod retriever;
pub mod scorer;
pub mod structural;
pub mod supervision;

pub use error::{Error, Result};
pub use http::RetryPolicy;
