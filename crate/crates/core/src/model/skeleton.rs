//! Skeleton temporal encoders: bidirectional LSTM, or the per-frame MLP ablation.

use candle_core::{Module, Tensor, D};
use candle_nn::Linear;

use super::config::{ModelConfig, SkeletonEncoderKind};
use super::layers::{linear, quick_gelu, sigmoid};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::pose::FEATURE_DIM;

struct LstmCell {
    input: Linear,
    hidden: Linear,
    hidden_size: usize,
}

impl LstmCell {
    fn new(ps: &mut ParamStore, name: &str, in_dim: usize, hidden: usize) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = ps.uniform(&format!("{name}.weight_ih"), (4 * hidden, in_dim), bound)?;
        let b = ps.uniform(&format!("{name}.bias"), 4 * hidden, bound)?;
        let w_hh = ps.uniform(&format!("{name}.weight_hh"), (4 * hidden, hidden), bound)?;
        Ok(LstmCell { input: Linear::new(w_ih, Some(b)), hidden: Linear::new(w_hh, None), hidden_size: hidden })
    }

    /// Runs over `xs` (each (B, F)) in the given order and returns the hidden states
    /// in that same order.
    fn run<'a>(&self, xs: impl Iterator<Item = &'a Tensor>, batch: usize, like: &Tensor) -> Result<Vec<Tensor>> {
        let zeros = Tensor::zeros((batch, self.hidden_size), like.dtype(), like.device())?;
        let (mut h, mut c) = (zeros.clone(), zeros);
        let mut out = Vec::new();
        let hs = self.hidden_size;
        for x in xs {
            let gates = (self.input.forward(x)? + self.hidden.forward(&h)?)?;
            let i = sigmoid(&gates.narrow(1, 0, hs)?)?;
            let f = sigmoid(&gates.narrow(1, hs, hs)?)?;
            let g = gates.narrow(1, 2 * hs, hs)?.tanh()?;
            let o = sigmoid(&gates.narrow(1, 3 * hs, hs)?)?;
            c = ((f * &c)? + (i * g)?)?;
            h = (o * c.tanh()?)?;
            out.push(h.clone());
        }
        Ok(out)
    }
}

pub struct SkeletonEncoder(Inner);

enum Inner {
    BiLstm { forward: LstmCell, backward: LstmCell, proj: Linear },
    Mlp { fc1: Linear, fc2: Linear },
}

impl SkeletonEncoder {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let h = cfg.skeleton_hidden;
        Ok(SkeletonEncoder(match cfg.skeleton_encoder {
            SkeletonEncoderKind::BiLstm => Inner::BiLstm {
                forward: LstmCell::new(ps, "skeleton.lstm_fwd", FEATURE_DIM, h)?,
                backward: LstmCell::new(ps, "skeleton.lstm_bwd", FEATURE_DIM, h)?,
                proj: linear(ps, "skeleton.proj", 2 * h, cfg.embed_dim)?,
            },
            // Hidden width matches the concatenated LSTM output.
            SkeletonEncoderKind::Mlp => Inner::Mlp {
                fc1: linear(ps, "skeleton.fc1", FEATURE_DIM, 2 * h)?,
                fc2: linear(ps, "skeleton.fc2", 2 * h, cfg.embed_dim)?,
            },
        }))
    }

    /// (B, N_f, 17) -> (B, N_f, D).
    pub fn forward(&self, skeleton: &Tensor) -> Result<Tensor> {
        let (b, n, f) = skeleton.dims3()?;
        if f != FEATURE_DIM {
            return Err(Error::validation(format!("skeleton rows must have {FEATURE_DIM} features, got {f}")));
        }
        match &self.0 {
            Inner::BiLstm { forward, backward, proj } => {
                let steps: Vec<Tensor> = (0..n).map(|t| skeleton.narrow(1, t, 1)?.squeeze(1)).collect::<candle_core::Result<_>>()?;
                let fwd = forward.run(steps.iter(), b, skeleton)?;
                let mut bwd = backward.run(steps.iter().rev(), b, skeleton)?;
                bwd.reverse();
                let fwd = Tensor::stack(&fwd, 1)?;
                let bwd = Tensor::stack(&bwd, 1)?;
                Ok(proj.forward(&Tensor::cat(&[fwd, bwd], D::Minus1)?)?)
            }
            Inner::Mlp { fc1, fc2 } => Ok(fc2.forward(&quick_gelu(&fc1.forward(skeleton)?)?)?),
        }
    }
}
