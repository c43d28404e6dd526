//! Differentiable building blocks shared by the encoders.

use candle_core::{DType, Device, Module, Result, Tensor, D};
use candle_nn::Linear;

use super::params::ParamStore;

/// Linear layer with PyTorch-style uniform(+-1/sqrt(fan_in)) initialisation.
pub fn linear(ps: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> crate::Result<Linear> {
    let bound = 1.0 / (in_dim as f64).sqrt();
    let w = ps.uniform(&format!("{name}.weight"), (out_dim, in_dim), bound)?;
    let b = ps.uniform(&format!("{name}.bias"), out_dim, bound)?;
    Ok(Linear::new(w, Some(b)))
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    (x.neg()?.exp()? + 1.0)?.recip()
}

/// x * sigmoid(1.702 x), the GELU approximation used by CLIP.
pub fn quick_gelu(x: &Tensor) -> Result<Tensor> {
    x * sigmoid(&(x * 1.702)?)?
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> crate::Result<Self> {
        Ok(LayerNorm {
            weight: ps.constant(&format!("{name}.weight"), dim, 1.0)?,
            bias: ps.constant(&format!("{name}.bias"), dim, 0.0)?,
            eps: 1e-5,
        })
    }
}

impl Module for LayerNorm {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)
    }
}

/// Additive causal mask of shape (len, len): 0 on and below the diagonal, a large
/// negative number above it.
pub fn causal_mask(len: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let data: Vec<f32> = (0..len)
        .flat_map(|i| (0..len).map(move |j| if j > i { -1e9 } else { 0.0 }))
        .collect();
    Tensor::from_vec(data, (len, len), device)?.to_dtype(dtype)
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize) -> crate::Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(crate::Error::config(format!("{name}: width {dim} not divisible by {heads} heads")));
        }
        Ok(MultiHeadAttention {
            q: linear(ps, &format!("{name}.q_proj"), dim, dim)?,
            k: linear(ps, &format!("{name}.k_proj"), dim, dim)?,
            v: linear(ps, &format!("{name}.v_proj"), dim, dim)?,
            out: linear(ps, &format!("{name}.out_proj"), dim, dim)?,
            heads,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l, d) = x.dims3()?;
        x.reshape((b, l, self.heads, d / self.heads))?.transpose(1, 2)?.contiguous()
    }

    /// `query`: (B, Lq, D); `context`: (B, Lk, D); `mask`: additive (Lq, Lk).
    pub fn forward(&self, query: &Tensor, context: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (b, lq, d) = query.dims3()?;
        let head_dim = d / self.heads;
        let q = self.split_heads(&self.q.forward(query)?)?;
        let k = self.split_heads(&self.k.forward(context)?)?;
        let v = self.split_heads(&self.v.forward(context)?)?;
        let mut scores = (q.matmul(&k.t()?.contiguous()?)? / (head_dim as f64).sqrt())?;
        if let Some(mask) = mask {
            scores = scores.broadcast_add(mask)?;
        }
        let attn = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let out = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, lq, d))?;
        self.out.forward(&out)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    fc1: Linear,
    fc2: Linear,
}

impl FeedForward {
    pub fn new(ps: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, out_dim: usize) -> crate::Result<Self> {
        Ok(FeedForward {
            fc1: linear(ps, &format!("{name}.fc1"), in_dim, hidden)?,
            fc2: linear(ps, &format!("{name}.fc2"), hidden, out_dim)?,
        })
    }
}

impl Module for FeedForward {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&quick_gelu(&self.fc1.forward(x)?)?)
    }
}

/// Pre-norm transformer encoder block.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    mlp: FeedForward,
}

impl EncoderLayer {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize, ffn_mult: usize) -> crate::Result<Self> {
        Ok(EncoderLayer {
            ln1: LayerNorm::new(ps, &format!("{name}.ln_1"), dim)?,
            attn: MultiHeadAttention::new(ps, &format!("{name}.attn"), dim, heads)?,
            ln2: LayerNorm::new(ps, &format!("{name}.ln_2"), dim)?,
            mlp: FeedForward::new(ps, &format!("{name}.mlp"), dim, dim * ffn_mult, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let x = (x + self.attn.forward(&h, &h, mask)?)?;
        let h = self.ln2.forward(&x)?;
        x + self.mlp.forward(&h)?
    }
}

/// Pre-norm transformer decoder block: self-attention over the queries, then
/// cross-attention into `memory`.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: MultiHeadAttention,
    ln2: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln3: LayerNorm,
    mlp: FeedForward,
}

impl DecoderLayer {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize, ffn_mult: usize) -> crate::Result<Self> {
        Ok(DecoderLayer {
            ln1: LayerNorm::new(ps, &format!("{name}.ln_1"), dim)?,
            self_attn: MultiHeadAttention::new(ps, &format!("{name}.self_attn"), dim, heads)?,
            ln2: LayerNorm::new(ps, &format!("{name}.ln_2"), dim)?,
            cross_attn: MultiHeadAttention::new(ps, &format!("{name}.cross_attn"), dim, heads)?,
            ln3: LayerNorm::new(ps, &format!("{name}.ln_3"), dim)?,
            mlp: FeedForward::new(ps, &format!("{name}.mlp"), dim, dim * ffn_mult, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor, memory: &Tensor) -> Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let x = (x + self.self_attn.forward(&h, &h, None)?)?;
        let h = self.ln2.forward(&x)?;
        let x = (&x + self.cross_attn.forward(&h, memory, None)?)?;
        let h = self.ln3.forward(&x)?;
        x + self.mlp.forward(&h)?
    }
}
