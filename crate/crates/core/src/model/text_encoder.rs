//! Class-description encoder with a per-video motion prompt prepended.

use candle_core::{Device, Module, Tensor};
use candle_nn::Linear;

use super::classes::ClassCatalog;
use super::config::ModelConfig;
use super::layers::{causal_mask, EncoderLayer, LayerNorm};
use super::params::ParamStore;
use super::tokenizer::{HashTokenizer, PAD_TOKEN};
use crate::error::{Error, Result};

/// Padded token ids for every class, in class-id order.
#[derive(Debug, Clone)]
pub struct TokenizedClasses {
    ids: Tensor,
    end_positions: Vec<usize>,
}

impl TokenizedClasses {
    pub fn new(catalog: &ClassCatalog, cfg: &ModelConfig, device: &Device) -> Result<Self> {
        let tokenizer = HashTokenizer::new(cfg.text.vocab_size);
        let budget = cfg.description_len();
        let mut ids = Vec::with_capacity(cfg.num_classes * budget);
        let mut end_positions = Vec::with_capacity(cfg.num_classes);
        for class in catalog.ordered(cfg.num_classes)? {
            let mut tokens = tokenizer.encode(&class.description);
            if tokens.len() > budget {
                return Err(Error::validation(format!(
                    "description of class {} ({}) has {} tokens; the text context leaves room for {budget}",
                    class.class_id,
                    class.name,
                    tokens.len()
                )));
            }
            end_positions.push(tokens.len() - 1);
            tokens.resize(budget, PAD_TOKEN);
            ids.extend(tokens);
        }
        Ok(TokenizedClasses { ids: Tensor::from_vec(ids, (cfg.num_classes, budget), device)?, end_positions })
    }

    pub fn num_classes(&self) -> usize {
        self.end_positions.len()
    }
}

pub struct TextEncoder {
    token_embedding: Tensor,
    positional: Tensor,
    layers: Vec<EncoderLayer>,
    ln_final: LayerNorm,
    proj: Linear,
    mask: Tensor,
    prompt_len: usize,
}

impl TextEncoder {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.embed_dim;
        let t = &cfg.text;
        let proj_w = ps.normal("text.proj.weight", (d, d), (d as f64).powf(-0.5))?;
        Ok(TextEncoder {
            token_embedding: ps.normal("text.token_embedding", (t.vocab_size, d), 0.02)?,
            positional: ps.normal("text.positional_embedding", (t.context_len, d), 0.01)?,
            layers: (0..t.layers)
                .map(|i| EncoderLayer::new(ps, &format!("text.layers.{i}"), d, t.heads, cfg.ffn_mult))
                .collect::<Result<_>>()?,
            ln_final: LayerNorm::new(ps, "text.ln_final", d)?,
            proj: Linear::new(proj_w, None),
            mask: causal_mask(t.context_len, ps.dtype(), ps.device())?,
            prompt_len: cfg.prompt_len,
        })
    }

    /// `prompt`: (B, L_p, D) -> (B, N_c, D), one feature per (video, class).
    pub fn forward(&self, prompt: &Tensor, classes: &TokenizedClasses) -> Result<Tensor> {
        let (b, lp, d) = prompt.dims3()?;
        if lp != self.prompt_len {
            return Err(Error::validation(format!("prompt has {lp} tokens, expected {}", self.prompt_len)));
        }
        let (nc, lt) = classes.ids.dims2()?;
        let ctx = lp + lt;
        let embedded = self.token_embedding.index_select(&classes.ids.flatten_all()?, 0)?.reshape((1, nc, lt, d))?;
        let x = Tensor::cat(
            &[prompt.unsqueeze(1)?.broadcast_as((b, nc, lp, d))?, embedded.broadcast_as((b, nc, lt, d))?],
            2,
        )?
        .reshape((b * nc, ctx, d))?
        .broadcast_add(&self.positional)?;
        let mut x = x;
        for layer in &self.layers {
            x = layer.forward(&x, Some(&self.mask))?;
        }
        let x = self.ln_final.forward(&x)?;
        let gather: Vec<u32> = (0..b * nc)
            .map(|row| (row * ctx + lp + classes.end_positions[row % nc]) as u32)
            .collect();
        let gather = Tensor::from_vec(gather, b * nc, x.device())?;
        let eot = x.reshape((b * nc * ctx, d))?.index_select(&gather, 0)?;
        Ok(self.proj.forward(&eot)?.reshape((b, nc, d))?)
    }
}
