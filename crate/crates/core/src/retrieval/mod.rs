//! Knowledge grounding: corpus chunking, embedding, exact cosine search, and the
//! static per-class knowledge cache read at report time.

mod cache;
mod corpus;
mod embed;
mod index;

pub use cache::{consolidate, ConsolidatedKnowledge, KnowledgeCache, DEFAULT_KNOWLEDGE_TOKENS};
pub use corpus::{chunk_corpus, load_corpus, Document, TextChunk, DEFAULT_CHUNK_TOKENS};
pub use embed::{Embedder, HashEmbedder, HttpEmbedder};
pub use index::{KnowledgeChunk, KnowledgeIndex, Retrieval, RetrievalHit};
