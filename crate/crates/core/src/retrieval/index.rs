use std::cmp::Ordering;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::TextChunk;
use super::embed::Embedder;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub chunk_id: u64,
    pub source_doc: String,
    pub text: String,
    pub token_count: usize,
    /// Unit length.
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: u64,
    pub score: f32,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub hits: Vec<RetrievalHit>,
    /// Set when more hits were requested than the index holds.
    pub truncated: bool,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    embedder_fingerprint: String,
    dim: usize,
    chunks: Vec<KnowledgeChunk>,
}

/// Immutable exact-search index over unit-normalised chunk embeddings.
#[derive(Debug)]
pub struct KnowledgeIndex {
    embedder_fingerprint: String,
    dim: usize,
    chunks: Vec<KnowledgeChunk>,
    queries: AtomicU64,
}

fn normalise(mut v: Vec<f32>) -> Result<Vec<f32>> {
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::validation("embedding has zero or non-finite norm"));
    }
    v.iter_mut().for_each(|x| *x = (*x as f64 / norm) as f32);
    Ok(v)
}

impl KnowledgeIndex {
    /// Embeds every chunk (in batches of 64) and builds the index.
    pub fn build(chunks: &[TextChunk], embedder: &dyn Embedder) -> Result<Self> {
        let mut out = Vec::with_capacity(chunks.len());
        for batch in chunks.chunks(64) {
            let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
            let vectors = embedder.embed(&texts)?;
            if vectors.len() != batch.len() {
                return Err(Error::Dependency("embedder returned the wrong number of vectors".into()));
            }
            for (c, v) in batch.iter().zip(vectors) {
                if v.len() != embedder.dim() {
                    return Err(Error::Dependency(format!("embedder returned width {} not {}", v.len(), embedder.dim())));
                }
                out.push(KnowledgeChunk {
                    chunk_id: c.chunk_id,
                    source_doc: c.source_doc.clone(),
                    text: c.text.clone(),
                    token_count: c.token_count,
                    embedding: normalise(v)?,
                });
            }
        }
        Self::from_chunks(embedder.fingerprint(), embedder.dim(), out)
    }

    fn from_chunks(embedder_fingerprint: String, dim: usize, chunks: Vec<KnowledgeChunk>) -> Result<Self> {
        let mut ids: Vec<u64> = chunks.iter().map(|c| c.chunk_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("duplicate chunk id in index"));
        }
        if chunks.iter().any(|c| c.embedding.len() != dim || c.text.is_empty()) {
            return Err(Error::validation("index chunk with empty text or wrong embedding width"));
        }
        Ok(KnowledgeIndex { embedder_fingerprint, dim, chunks, queries: AtomicU64::new(0) })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedder_fingerprint(&self) -> &str {
        &self.embedder_fingerprint
    }

    pub fn chunks(&self) -> &[KnowledgeChunk] {
        &self.chunks
    }

    pub fn chunk(&self, id: u64) -> Option<&KnowledgeChunk> {
        self.chunks.iter().find(|c| c.chunk_id == id)
    }

    /// Number of `retrieve` calls served so far.
    pub fn query_count(&self) -> u64 {
        self.queries.load(AtomicOrdering::Relaxed)
    }

    /// Content hash over the embedder fingerprint and every chunk.
    pub fn content_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.embedder_fingerprint.as_bytes());
        for c in &self.chunks {
            h.update(c.chunk_id.to_le_bytes());
            h.update(c.source_doc.as_bytes());
            h.update([0]);
            h.update(c.text.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    /// Top-`k` chunks by cosine similarity, best first; equal scores are ordered by
    /// chunk id.
    pub fn retrieve(&self, query: &[f32], k: usize) -> Result<Retrieval> {
        if k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        if query.len() != self.dim {
            return Err(Error::validation(format!("query width {} does not match index width {}", query.len(), self.dim)));
        }
        let q = normalise(query.to_vec())?;
        self.queries.fetch_add(1, AtomicOrdering::Relaxed);
        let mut scored: Vec<(f32, u64)> = self
            .chunks
            .iter()
            .map(|c| {
                let dot: f64 = c.embedding.iter().zip(&q).map(|(&a, &b)| a as f64 * b as f64).sum();
                (dot as f32, c.chunk_id)
            })
            .collect();
        let order = |a: &(f32, u64), b: &(f32, u64)| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
        let take = k.min(scored.len());
        if take < scored.len() {
            scored.select_nth_unstable_by(take, order);
            scored.truncate(take);
        }
        scored.sort_by(order);
        Ok(Retrieval {
            hits: scored
                .into_iter()
                .enumerate()
                .map(|(i, (score, chunk_id))| RetrievalHit { chunk_id, score, rank: i + 1 })
                .collect(),
            truncated: k > self.chunks.len(),
        })
    }

    /// Union of two indexes built with the same embedder; ids of `other` are shifted
    /// past this index's largest id.
    pub fn merge(&self, other: &KnowledgeIndex) -> Result<KnowledgeIndex> {
        if self.embedder_fingerprint != other.embedder_fingerprint || self.dim != other.dim {
            return Err(Error::config(format!(
                "cannot merge indexes built with `{}` and `{}`",
                self.embedder_fingerprint, other.embedder_fingerprint
            )));
        }
        let offset = self.chunks.iter().map(|c| c.chunk_id + 1).max().unwrap_or(0);
        let mut chunks = self.chunks.clone();
        chunks.extend(other.chunks.iter().map(|c| KnowledgeChunk { chunk_id: c.chunk_id + offset, ..c.clone() }));
        Self::from_chunks(self.embedder_fingerprint.clone(), self.dim, chunks)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let stored = Stored { embedder_fingerprint: self.embedder_fingerprint.clone(), dim: self.dim, chunks: self.chunks.clone() };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(&stored)?).map_err(Error::at(&tmp))?;
        std::fs::rename(&tmp, path).map_err(Error::at(path))
    }

    /// Loads an index and checks it was built with `embedder`.
    pub fn load(path: impl AsRef<Path>, embedder: &dyn Embedder) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read(path).map_err(Error::at(path))?;
        let stored: Stored = serde_json::from_slice(&raw)?;
        if stored.embedder_fingerprint != embedder.fingerprint() {
            return Err(Error::config(format!(
                "index at {} was built with `{}`, not `{}`",
                path.display(),
                stored.embedder_fingerprint,
                embedder.fingerprint()
            )));
        }
        Self::from_chunks(stored.embedder_fingerprint, stored.dim, stored.chunks)
    }
}
