//! The two video streams: skeleton-guided spatial fusion and frame-difference motion.

use candle_core::{Module, Tensor, D};

use super::config::{ModelConfig, SpatialFusionKind};
use super::layers::{DecoderLayer, EncoderLayer, FeedForward, LayerNorm};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Longest frame sequence the temporal positional tables cover.
pub const MAX_FRAMES: usize = 64;

fn check_frames(n: usize) -> Result<()> {
    if n > MAX_FRAMES {
        return Err(Error::validation(format!("{n} frames exceed the {MAX_FRAMES}-frame limit")));
    }
    Ok(())
}

fn add_positions(x: &Tensor, table: &Tensor) -> Result<Tensor> {
    let n = x.dim(1)?;
    check_frames(n)?;
    Ok(x.broadcast_add(&table.narrow(0, 0, n)?)?)
}

pub struct SpatialFusion(Fusion);

enum Fusion {
    Guided { positional: Tensor, layers: Vec<DecoderLayer>, ln: LayerNorm },
    Concat(FeedForward),
}

impl SpatialFusion {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.embed_dim;
        Ok(SpatialFusion(match cfg.spatial_fusion {
            SpatialFusionKind::GuidedTransformer => Fusion::Guided {
                positional: ps.normal("guided.positional_embedding", (MAX_FRAMES, d), 0.01)?,
                layers: (0..cfg.guided_layers)
                    .map(|i| DecoderLayer::new(ps, &format!("guided.layers.{i}"), d, cfg.guided_heads, cfg.ffn_mult))
                    .collect::<Result<_>>()?,
                ln: LayerNorm::new(ps, "guided.ln", d)?,
            },
            SpatialFusionKind::ConcatMlp => {
                Fusion::Concat(FeedForward::new(ps, "guided.concat_mlp", 2 * d, cfg.ffn_mult * d, d)?)
            }
        }))
    }

    /// Frame features query the skeleton embedding: (B, N_f, D) x2 -> (B, N_f, D).
    pub fn forward(&self, v_seq: &Tensor, k_s: &Tensor) -> Result<Tensor> {
        if v_seq.dims() != k_s.dims() {
            return Err(Error::validation(format!(
                "frame features {:?} and skeleton embedding {:?} differ in shape",
                v_seq.dims(),
                k_s.dims()
            )));
        }
        match &self.0 {
            Fusion::Guided { positional, layers, ln } => {
                let mut x = add_positions(v_seq, positional)?;
                for layer in layers {
                    x = layer.forward(&x, k_s)?;
                }
                Ok(ln.forward(&x)?)
            }
            Fusion::Concat(mlp) => Ok(mlp.forward(&Tensor::cat(&[v_seq, k_s], D::Minus1)?)?),
        }
    }
}

/// `x[:, t+1] - x[:, t]` along the time axis: (B, N, D) -> (B, N-1, D).
pub fn frame_differences(v_seq: &Tensor) -> Result<Tensor> {
    let n = v_seq.dim(1)?;
    if n < 2 {
        return Err(Error::validation(format!("motion needs at least 2 frames, got {n}")));
    }
    Ok((v_seq.narrow(1, 1, n - 1)? - v_seq.narrow(1, 0, n - 1)?)?)
}

pub struct MotionTransformer {
    positional: Tensor,
    layers: Vec<EncoderLayer>,
    ln: LayerNorm,
}

impl MotionTransformer {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.embed_dim;
        Ok(MotionTransformer {
            positional: ps.normal("motion.positional_embedding", (MAX_FRAMES, d), 0.01)?,
            layers: (0..cfg.motion_layers)
                .map(|i| EncoderLayer::new(ps, &format!("motion.layers.{i}"), d, cfg.motion_heads, cfg.ffn_mult))
                .collect::<Result<_>>()?,
            ln: LayerNorm::new(ps, "motion.ln", d)?,
        })
    }

    /// (B, N_f, D) frame features -> (B, N_f - 1, D) motion features.
    pub fn forward(&self, v_seq: &Tensor) -> Result<Tensor> {
        let mut x = add_positions(&frame_differences(v_seq)?, &self.positional)?;
        for layer in &self.layers {
            x = layer.forward(&x, None)?;
        }
        Ok(self.ln.forward(&x)?)
    }
}

/// Time-averaged spatial plus time-averaged motion features: (B, 1, D).
pub fn fuse_streams(t_s: &Tensor, t_m: &Tensor) -> Result<Tensor> {
    let (bs, _, ds) = t_s.dims3()?;
    let (bm, _, dm) = t_m.dims3()?;
    if bs != bm || ds != dm {
        return Err(Error::validation(format!("stream shapes {:?} and {:?} disagree", t_s.dims(), t_m.dims())));
    }
    Ok((t_s.mean_keepdim(1)? + t_m.mean_keepdim(1)?)?)
}

/// Pooled motion features -> `prompt_len` prompt tokens.
pub struct MotionAdapter {
    mlp: FeedForward,
    prompt_len: usize,
    dim: usize,
}

impl MotionAdapter {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.embed_dim;
        Ok(MotionAdapter {
            mlp: FeedForward::new(ps, "adapter.mlp", d, d, cfg.prompt_len * d)?,
            prompt_len: cfg.prompt_len,
            dim: d,
        })
    }

    /// (B, N_m, D) -> (B, L_p, D).
    pub fn forward(&self, t_m: &Tensor) -> Result<Tensor> {
        let (b, _, d) = t_m.dims3()?;
        if d != self.dim {
            return Err(Error::validation(format!("motion features have width {d}, expected {}", self.dim)));
        }
        let pooled = t_m.mean(1)?;
        Ok(self.mlp.forward(&pooled)?.reshape((b, self.prompt_len, d))?)
    }
}
