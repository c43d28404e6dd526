//! CLIP-style ViT image encoder.

use candle_core::{Module, Tensor};
use candle_nn::Linear;

use super::config::ModelConfig;
use super::layers::{EncoderLayer, LayerNorm};
use super::params::ParamStore;
use crate::error::{Error, Result};

pub struct VisionEncoder {
    patch: Linear,
    class_embedding: Tensor,
    positional: Tensor,
    ln_pre: LayerNorm,
    layers: Vec<EncoderLayer>,
    ln_post: LayerNorm,
    proj: Linear,
    patch_size: usize,
    image_size: usize,
}

impl VisionEncoder {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let v = &cfg.vision;
        let grid = cfg.image_size / v.patch_size;
        let scale = (v.width as f64).powf(-0.5);
        let patch_w = ps.normal("vision.patch.weight", (v.width, 3 * v.patch_size * v.patch_size), scale)?;
        let proj_w = ps.normal("vision.proj.weight", (cfg.embed_dim, v.width), scale)?;
        Ok(VisionEncoder {
            patch: Linear::new(patch_w, None),
            class_embedding: ps.normal("vision.class_embedding", v.width, scale)?,
            positional: ps.normal("vision.positional_embedding", (grid * grid + 1, v.width), scale)?,
            ln_pre: LayerNorm::new(ps, "vision.ln_pre", v.width)?,
            layers: (0..v.layers)
                .map(|i| EncoderLayer::new(ps, &format!("vision.layers.{i}"), v.width, v.heads, cfg.ffn_mult))
                .collect::<Result<_>>()?,
            ln_post: LayerNorm::new(ps, "vision.ln_post", v.width)?,
            proj: Linear::new(proj_w, None),
            patch_size: v.patch_size,
            image_size: cfg.image_size,
        })
    }

    /// `images`: (N, 3, H, W) -> (N, D), the projected class-token feature.
    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = images.dims4()?;
        if c != 3 || h != self.image_size || w != self.image_size {
            return Err(Error::validation(format!(
                "frames must be 3x{s}x{s}, got {c}x{h}x{w}",
                s = self.image_size
            )));
        }
        let p = self.patch_size;
        let (gh, gw) = (h / p, w / p);
        let patches = images
            .reshape(&[n, c, gh, p, gw, p][..])?
            .permute(&[0, 2, 4, 1, 3, 5][..])?
            .reshape((n, gh * gw, c * p * p))?;
        let x = self.patch.forward(&patches)?;
        let width = x.dim(2)?;
        let cls = self.class_embedding.reshape((1, 1, width))?.broadcast_as((n, 1, width))?;
        let x = Tensor::cat(&[cls, x], 1)?.broadcast_add(&self.positional)?;
        let mut x = self.ln_pre.forward(&x)?;
        for layer in &self.layers {
            x = layer.forward(&x, None)?;
        }
        let cls = self.ln_post.forward(&x.narrow(1, 0, 1)?.squeeze(1)?)?;
        Ok(self.proj.forward(&cls)?)
    }
}
