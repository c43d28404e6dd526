use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Result};
use clap::Args;
use rehab_core::retrieval::{self, chunk_corpus, load_corpus, Embedder, HashEmbedder, HttpEmbedder, KnowledgeCache, KnowledgeIndex};
use rehab_service::Store;

use crate::{emit, Common, EmbedderKind};

#[derive(Args, Clone)]
pub struct EmbedArgs {
    #[arg(long, value_enum, default_value = "hash")]
    pub embedder: EmbedderKind,
    /// Vector size of the embedder.
    #[arg(long, default_value_t = 256)]
    pub embed_dim: usize,
    #[arg(long, env = "REHAB_EMBED_ENDPOINT", default_value = "http://localhost:8000/v1")]
    pub embed_endpoint: String,
    #[arg(long, env = "REHAB_EMBED_MODEL", default_value = "text-embedding-3-small")]
    pub embed_model: String,
}

impl EmbedArgs {
    pub fn build(&self) -> Box<dyn Embedder> {
        match self.embedder {
            EmbedderKind::Hash => Box::new(HashEmbedder::new(self.embed_dim)),
            EmbedderKind::Http => Box::new(HttpEmbedder {
                endpoint: self.embed_endpoint.clone(),
                model: self.embed_model.clone(),
                api_key: std::env::var("REHAB_EMBED_API_KEY").ok(),
                dim: self.embed_dim,
                timeout: Duration::from_secs(60),
            }),
        }
    }
}

#[derive(Args)]
pub struct BuildIndexArgs {
    /// Directory of `.txt` documents (optional `<stem>.meta.json` sidecars).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = retrieval::DEFAULT_CHUNK_TOKENS)]
    chunk_tokens: usize,
    #[command(flatten)]
    embed: EmbedArgs,
}

pub fn build_index(a: BuildIndexArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus)?;
    let chunks = chunk_corpus(&docs, a.chunk_tokens)?;
    let index = KnowledgeIndex::build(&chunks, a.embed.build().as_ref())?;
    index.save(&a.out)?;
    emit(
        &serde_json::json!({
            "documents": docs.len(),
            "chunks": index.len(),
            "embedder": index.embedder_fingerprint(),
            "fingerprint": index.content_fingerprint(),
        }),
        None,
    )
}

#[derive(Args)]
pub struct ConsolidateArgs {
    #[arg(long)]
    index: PathBuf,
    /// Where to write the cache JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also store the cache in this service database.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Previous cache; an unchanged result keeps its version.
    #[arg(long)]
    previous: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = retrieval::DEFAULT_KNOWLEDGE_TOKENS)]
    tokens: usize,
    #[command(flatten)]
    embed: EmbedArgs,
}

pub fn consolidate(c: &Common, a: ConsolidateArgs) -> Result<()> {
    if a.out.is_none() && a.db.is_none() {
        bail!("nothing to do: give --out and/or --db");
    }
    let embedder = a.embed.build();
    let index = KnowledgeIndex::load(&a.index, embedder.as_ref())?;
    let store = a.db.as_ref().map(|p| -> Result<Store> {
        let s = Store::open(p)?;
        s.migrate()?;
        Ok(s)
    });
    let store = store.transpose()?;
    let previous = match (&a.previous, &store) {
        (Some(p), _) => Some(KnowledgeCache::load(p)?),
        (None, Some(s)) => s.latest_knowledge()?,
        _ => None,
    };
    let cache = retrieval::consolidate(&c.catalog()?, &index, embedder.as_ref(), a.k, a.tokens, previous.as_ref())?;
    if let Some(out) = &a.out {
        cache.save(out)?;
    }
    if let Some(s) = &store {
        s.save_knowledge(&cache, chrono::Utc::now())?;
    }
    emit(
        &serde_json::json!({
            "version": cache.version,
            "classes": cache.entries.len(),
            "index_fingerprint": cache.index_fingerprint,
        }),
        None,
    )
}
