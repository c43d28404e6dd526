use std::time::Duration;

use serde_json::json;

use crate::error::{Error, Result};
use crate::text::{fnv1a, tokens};

/// Maps texts to fixed-width vectors.
pub trait Embedder: Send + Sync {
    /// Identifies the model and its settings; indexes built with different
    /// fingerprints are not comparable.
    fn fingerprint(&self) -> String;

    fn dim(&self) -> usize;

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Deterministic signed feature hashing over lowercased unigrams and bigrams,
/// L2-normalised. No semantics, but stable and cheap.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding width must be positive");
        HashEmbedder { dim }
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        let words: Vec<String> = tokens(text).map(str::to_lowercase).collect();
        let mut add = |feature: &str, weight: f32| {
            let h = fnv1a(feature.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign * weight;
        };
        for w in &words {
            add(w, 1.0);
        }
        for pair in words.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(256)
    }
}

impl Embedder for HashEmbedder {
    fn fingerprint(&self) -> String {
        format!("hash-fnv1a-uni-bi/{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub dim: usize,
    pub timeout: Duration,
}

impl Embedder for HttpEmbedder {
    fn fingerprint(&self) -> String {
        format!("http:{}/{}", self.model, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let url = format!("{}/embeddings", self.endpoint.trim_end_matches('/'));
        let body = json!({ "model": self.model, "input": texts });
        let reply = crate::report::post_json(&url, self.api_key.as_deref(), &body, self.timeout)
            .map_err(|e| Error::Dependency(format!("embedding provider: {e}")))?;
        let data = reply["data"].as_array().ok_or_else(|| Error::Dependency("embedding reply lacks `data`".into()))?;
        let mut out: Vec<(u64, Vec<f32>)> = data
            .iter()
            .map(|item| {
                let v: Vec<f32> = item["embedding"]
                    .as_array()
                    .map(|a| a.iter().filter_map(|x| x.as_f64()).map(|x| x as f32).collect())
                    .unwrap_or_default();
                (item["index"].as_u64().unwrap_or(0), v)
            })
            .collect();
        out.sort_by_key(|(i, _)| *i);
        if out.len() != texts.len() || out.iter().any(|(_, v)| v.len() != self.dim) {
            return Err(Error::Dependency(format!(
                "embedding reply has {} vectors for {} inputs or the wrong width",
                out.len(),
                texts.len()
            )));
        }
        Ok(out.into_iter().map(|(_, v)| v).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embeddings_are_unit_and_deterministic() {
        let e = HashEmbedder::new(64);
        let a = e.embed(&["Raise the arm", "raise THE arm", "", "lower the leg"]).unwrap();
        for v in &a {
            assert!((v.iter().map(|x| x * x).sum::<f32>() - 1.0).abs() < 1e-5);
        }
        assert_eq!(a[0], a[1]);
        assert_ne!(a[0], a[3]);
    }
}
