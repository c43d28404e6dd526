use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::token_spans;

pub const DEFAULT_CHUNK_TOKENS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// A run of at most `chunk_tokens` consecutive tokens from one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextChunk {
    pub chunk_id: u64,
    pub source_doc: String,
    /// Position of the chunk within its document.
    pub ordinal: usize,
    pub text: String,
    pub token_count: usize,
    /// Byte range of `text` in the source document.
    pub byte_range: (usize, usize),
}

/// Splits every document into sequential, non-overlapping chunks. Chunk ids are
/// assigned in document order. Documents without tokens are skipped with a warning.
pub fn chunk_corpus(documents: &[Document], chunk_tokens: usize) -> Result<Vec<TextChunk>> {
    if documents.is_empty() {
        return Err(Error::validation("corpus has no documents"));
    }
    if chunk_tokens == 0 {
        return Err(Error::config("chunk_tokens must be positive"));
    }
    let mut out = Vec::new();
    for doc in documents {
        let spans = token_spans(&doc.text);
        if spans.is_empty() {
            tracing::warn!(doc = %doc.doc_id, "skipping empty document");
            continue;
        }
        for (ordinal, group) in spans.chunks(chunk_tokens).enumerate() {
            let (start, end) = (group[0].0, group[group.len() - 1].1);
            out.push(TextChunk {
                chunk_id: out.len() as u64,
                source_doc: doc.doc_id.clone(),
                ordinal,
                text: doc.text[start..end].to_string(),
                token_count: group.len(),
                byte_range: (start, end),
            });
        }
    }
    Ok(out)
}

/// Reads every `*.txt` file in `dir` (sorted by name). A `<stem>.meta.json` sidecar,
/// when present, supplies string metadata; the document id is the file stem.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<Document>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(Error::at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let doc_id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let text = std::fs::read_to_string(&path).map_err(Error::at(&path))?;
            let meta_path = path.with_file_name(format!("{doc_id}.meta.json"));
            let metadata = if meta_path.exists() {
                let raw = std::fs::read_to_string(&meta_path).map_err(Error::at(&meta_path))?;
                serde_json::from_str(&raw)?
            } else {
                BTreeMap::new()
            };
            Ok(Document { doc_id, text, metadata })
        })
        .collect()
}
