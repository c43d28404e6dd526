use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::Embedder;
use super::index::{KnowledgeIndex, RetrievalHit};
use crate::dataset::{Label, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::model::ClassCatalog;
use crate::text::token_spans;

/// Token budget for the knowledge text placed in a prompt.
pub const DEFAULT_KNOWLEDGE_TOKENS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedKnowledge {
    pub action_class_id: Label,
    pub hits: Vec<RetrievalHit>,
    /// Hit texts with their source documents, ready for a prompt.
    pub concatenated_text: String,
}

/// Per-action retrieval results computed once and read at report time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeCache {
    pub version: u32,
    pub k: usize,
    pub index_fingerprint: String,
    pub descriptions_sha256: String,
    pub entries: BTreeMap<u8, ConsolidatedKnowledge>,
}

impl KnowledgeCache {
    pub fn get(&self, label: Label) -> Result<&ConsolidatedKnowledge> {
        self.entries
            .get(&label.0)
            .ok_or_else(|| Error::config(format!("no consolidated knowledge for class {}", label.0)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        Ok(serde_json::from_str(raw)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(Error::at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(Error::at(path))?)
    }
}

fn truncate_tokens(text: &str, budget: usize) -> &str {
    match token_spans(text).get(budget) {
        Some(&(start, _)) => text[..start].trim_end(),
        None => text,
    }
}

/// Retrieves the top-`k` chunks for every action class, using the embedding of the
/// class description as the query.
///
/// With `previous` given, an unchanged result keeps the previous version; any change
/// (corpus, descriptions or hits) produces version + 1.
pub fn consolidate(
    catalog: &ClassCatalog,
    index: &KnowledgeIndex,
    embedder: &dyn Embedder,
    k: usize,
    token_budget: usize,
    previous: Option<&KnowledgeCache>,
) -> Result<KnowledgeCache> {
    if embedder.fingerprint() != index.embedder_fingerprint() {
        return Err(Error::config(format!(
            "index built with `{}` but queries use `{}`",
            index.embedder_fingerprint(),
            embedder.fingerprint()
        )));
    }
    let classes = catalog.ordered(NUM_CLASSES)?;
    let actions: Vec<_> = classes.iter().filter(|c| c.class_id.is_action()).collect();
    let queries = embedder.embed(&actions.iter().map(|c| c.description.as_str()).collect::<Vec<_>>())?;
    let mut entries = BTreeMap::new();
    for (class, query) in actions.iter().zip(&queries) {
        let r = index.retrieve(query, k)?;
        if r.truncated {
            tracing::warn!(class = class.class_id.0, k, size = index.len(), "index smaller than k");
        }
        let text = r
            .hits
            .iter()
            .map(|h| {
                let c = index.chunk(h.chunk_id).expect("hit from this index");
                format!("[{}] (source: {}) {}", h.rank, c.source_doc, c.text)
            })
            .collect::<Vec<_>>()
            .join("\n");
        entries.insert(
            class.class_id.0,
            ConsolidatedKnowledge {
                action_class_id: class.class_id,
                hits: r.hits,
                concatenated_text: truncate_tokens(&text, token_budget).to_string(),
            },
        );
    }
    let mut cache = KnowledgeCache {
        version: 1,
        k,
        index_fingerprint: index.content_fingerprint(),
        descriptions_sha256: catalog.fingerprint(),
        entries,
    };
    if let Some(prev) = previous {
        let unchanged = prev.k == cache.k
            && prev.index_fingerprint == cache.index_fingerprint
            && prev.descriptions_sha256 == cache.descriptions_sha256
            && prev.entries == cache.entries;
        cache.version = if unchanged { prev.version } else { prev.version + 1 };
    }
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_keeps_whole_tokens() {
        assert_eq!(truncate_tokens("a bb, ccc d", 3), "a bb,");
        assert_eq!(truncate_tokens("a b", 5), "a b");
    }
}
