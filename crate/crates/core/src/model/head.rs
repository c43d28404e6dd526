//! Cross-modal enhancement and temperature-scaled cosine classification.

use candle_core::{Module, Tensor, D};

use super::config::ModelConfig;
use super::layers::{LayerNorm, MultiHeadAttention};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Norm guard for the cosine.
pub const COSINE_EPS: f64 = 1e-8;

pub struct CrossModalEnhancer {
    text_attn: MultiHeadAttention,
    video_attn: MultiHeadAttention,
    ln_text: LayerNorm,
    ln_video: LayerNorm,
}

impl CrossModalEnhancer {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.embed_dim;
        Ok(CrossModalEnhancer {
            text_attn: MultiHeadAttention::new(ps, "cross.text_attn", d, cfg.cross_heads)?,
            video_attn: MultiHeadAttention::new(ps, "cross.video_attn", d, cfg.cross_heads)?,
            ln_text: LayerNorm::new(ps, "cross.ln_text", d)?,
            ln_video: LayerNorm::new(ps, "cross.ln_video", d)?,
        })
    }

    /// Both branches read the un-enhanced inputs:
    /// T' = LN(T + CA(T, V)), V' = LN(V + CA(V, T)).
    pub fn forward(&self, v: &Tensor, t: &Tensor) -> Result<(Tensor, Tensor)> {
        let (bv, one, dv) = v.dims3()?;
        let (bt, _, dt) = t.dims3()?;
        if one != 1 || bv != bt || dv != dt {
            return Err(Error::validation(format!("video {:?} and text {:?} features disagree", v.dims(), t.dims())));
        }
        let t_prime = self.ln_text.forward(&(t + self.text_attn.forward(t, v, None)?)?)?;
        let v_prime = self.ln_video.forward(&(v + self.video_attn.forward(v, t, None)?)?)?;
        Ok((v_prime, t_prime))
    }
}

fn unit(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()? + COSINE_EPS)?;
    Ok(x.broadcast_div(&norm)?)
}

/// `exp(tau) * cos(V'[b], T'[b, c])`: (B, 1, D) x (B, N_c, D) -> (B, N_c).
///
/// `tau` is a scalar (or single-element) tensor.
pub fn cosine_logits(v_prime: &Tensor, t_prime: &Tensor, tau: &Tensor) -> Result<Tensor> {
    let (b, one, d) = v_prime.dims3()?;
    let (bt, nc, dt) = t_prime.dims3()?;
    if one != 1 || b != bt || d != dt {
        return Err(Error::validation(format!("cannot score {:?} against {:?}", v_prime.dims(), t_prime.dims())));
    }
    let cos = unit(t_prime)?.matmul(&unit(v_prime)?.transpose(1, 2)?)?.reshape((b, nc))?;
    Ok(cos.broadcast_mul(&tau.exp()?.reshape((1, 1))?)?)
}
