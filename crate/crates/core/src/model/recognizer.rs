//! The full recogniser: frames + skeleton -> per-class logits.

use candle_core::{DType, Device, Tensor, Var};

use super::classes::ClassCatalog;
use super::config::ModelConfig;
use super::head::{cosine_logits, CrossModalEnhancer};
use super::params::ParamStore;
use super::skeleton::SkeletonEncoder;
use super::streams::{fuse_streams, MotionAdapter, MotionTransformer, SpatialFusion};
use super::text_encoder::{TextEncoder, TokenizedClasses};
use super::vision::VisionEncoder;
use crate::error::{Error, Result};
use crate::pose::FEATURE_DIM;

/// A batch of preprocessed clips: frames (B, N_f, 3, H, W) and skeleton (B, N_f, 17).
#[derive(Debug, Clone)]
pub struct ClipBatch {
    pub frames: Tensor,
    pub skeleton: Tensor,
}

impl ClipBatch {
    pub fn new(frames: Tensor, skeleton: Tensor) -> Result<Self> {
        let (b, n, c, _, _) = frames.dims5()?;
        let (bs, ns, f) = skeleton.dims3()?;
        if c != 3 || (b, n) != (bs, ns) || f != FEATURE_DIM {
            return Err(Error::validation(format!(
                "frames {:?} and skeleton {:?} do not form a batch",
                frames.dims(),
                skeleton.dims()
            )));
        }
        Ok(ClipBatch { frames, skeleton })
    }

    pub fn batch_size(&self) -> usize {
        self.frames.dims()[0]
    }

    pub fn num_frames(&self) -> usize {
        self.frames.dims()[1]
    }
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub v_seq: Tensor,
    pub k_s: Option<Tensor>,
    pub t_s: Tensor,
    pub t_m: Tensor,
    pub v: Tensor,
    pub p_m: Tensor,
    pub t: Tensor,
    pub v_prime: Tensor,
    pub t_prime: Tensor,
    pub logits: Tensor,
}

pub struct RecognitionModel {
    config: ModelConfig,
    params: ParamStore,
    catalog: ClassCatalog,
    classes: TokenizedClasses,
    vision: VisionEncoder,
    skeleton: Option<(SkeletonEncoder, SpatialFusion)>,
    motion: MotionTransformer,
    adapter: MotionAdapter,
    text: TextEncoder,
    enhancer: CrossModalEnhancer,
    tau: Tensor,
}

impl RecognitionModel {
    pub fn new(config: &ModelConfig, catalog: &ClassCatalog, device: &Device) -> Result<Self> {
        Self::with_dtype(config, catalog, DType::F32, device)
    }

    pub fn with_dtype(config: &ModelConfig, catalog: &ClassCatalog, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let classes = TokenizedClasses::new(catalog, config, device)?;
        let mut ps = ParamStore::new(config.seed, dtype, device.clone());
        let vision = VisionEncoder::new(&mut ps, config)?;
        let skeleton = if config.use_skeleton {
            Some((SkeletonEncoder::new(&mut ps, config)?, SpatialFusion::new(&mut ps, config)?))
        } else {
            None
        };
        let motion = MotionTransformer::new(&mut ps, config)?;
        let adapter = MotionAdapter::new(&mut ps, config)?;
        let text = TextEncoder::new(&mut ps, config)?;
        let enhancer = CrossModalEnhancer::new(&mut ps, config)?;
        let tau = ps.constant("logit_scale", (), config.tau_init)?;
        Ok(RecognitionModel {
            config: config.clone(),
            params: ps,
            catalog: catalog.clone(),
            classes,
            vision,
            skeleton,
            motion,
            adapter,
            text,
            enhancer,
            tau,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn catalog(&self) -> &ClassCatalog {
        &self.catalog
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    /// Parameters the optimiser updates; the vision encoder is excluded when frozen.
    pub fn trainable_vars(&self) -> Vec<Var> {
        let frozen: &[&str] = if self.config.freeze_vision { &["vision."] } else { &[] };
        self.params.trainable(frozen)
    }

    pub fn tau(&self) -> Result<f64> {
        Ok(self.tau.to_dtype(DType::F64)?.to_scalar::<f64>()?)
    }

    /// Keeps exp(tau) within the configured ceiling.
    pub fn clamp_tau(&self) -> Result<()> {
        if self.tau()? > self.config.tau_max {
            let var = self.params.var("logit_scale").expect("tau registered");
            var.set(&Tensor::new(self.config.tau_max, self.device())?.to_dtype(self.dtype())?)?;
        }
        Ok(())
    }

    /// (B, N_f, 3, H, W) -> (B, N_f, D). Detached when the encoder is frozen.
    pub fn encode_frames(&self, frames: &Tensor) -> Result<Tensor> {
        let (b, n, c, h, w) = frames.dims5()?;
        let feats = self.vision.forward(&frames.reshape((b * n, c, h, w))?)?;
        let feats = feats.reshape((b, n, self.config.embed_dim))?;
        Ok(if self.config.freeze_vision { feats.detach() } else { feats })
    }

    pub fn encode_skeleton(&self, skeleton: &Tensor) -> Result<Tensor> {
        match &self.skeleton {
            Some((encoder, _)) => encoder.forward(skeleton),
            None => Err(Error::config("model was built without the skeleton path")),
        }
    }

    /// Skeleton-guided spatial features; without the skeleton path this is `v_seq`.
    pub fn guided_spatial_fuse(&self, v_seq: &Tensor, k_s: &Tensor) -> Result<Tensor> {
        match &self.skeleton {
            Some((_, fusion)) => fusion.forward(v_seq, k_s),
            None => Ok(v_seq.clone()),
        }
    }

    pub fn motion_encode(&self, v_seq: &Tensor) -> Result<Tensor> {
        self.motion.forward(v_seq)
    }

    pub fn motion_prompt(&self, t_m: &Tensor) -> Result<Tensor> {
        self.adapter.forward(t_m)
    }

    pub fn encode_class_texts(&self, p_m: &Tensor) -> Result<Tensor> {
        self.text.forward(p_m, &self.classes)
    }

    pub fn cross_modal_enhance(&self, v: &Tensor, t: &Tensor) -> Result<(Tensor, Tensor)> {
        self.enhancer.forward(v, t)
    }

    pub fn classify(&self, v_prime: &Tensor, t_prime: &Tensor) -> Result<Tensor> {
        cosine_logits(v_prime, t_prime, &self.tau)
    }

    /// Everything after the vision encoder, from cached frame features.
    pub fn trace_from_features(&self, v_seq: &Tensor, skeleton: &Tensor) -> Result<ForwardTrace> {
        let (b, n, _) = v_seq.dims3()?;
        let (bs, ns, _) = skeleton.dims3()?;
        if (b, n) != (bs, ns) {
            return Err(Error::validation(format!(
                "frame features {:?} and skeleton {:?} disagree",
                v_seq.dims(),
                skeleton.dims()
            )));
        }
        let (k_s, t_s) = match &self.skeleton {
            Some(_) => {
                let k_s = self.encode_skeleton(skeleton)?;
                let t_s = self.guided_spatial_fuse(v_seq, &k_s)?;
                (Some(k_s), t_s)
            }
            None => (None, v_seq.clone()),
        };
        let t_m = self.motion_encode(v_seq)?;
        let v = fuse_streams(&t_s, &t_m)?;
        let p_m = self.motion_prompt(&t_m)?;
        let t = self.encode_class_texts(&p_m)?;
        let (v_prime, t_prime) = self.cross_modal_enhance(&v, &t)?;
        let logits = self.classify(&v_prime, &t_prime)?;
        Ok(ForwardTrace { v_seq: v_seq.clone(), k_s, t_s, t_m, v, p_m, t, v_prime, t_prime, logits })
    }

    pub fn forward_trace(&self, batch: &ClipBatch) -> Result<ForwardTrace> {
        let v_seq = self.encode_frames(&batch.frames)?;
        self.trace_from_features(&v_seq, &batch.skeleton.to_dtype(self.dtype())?)
    }

    /// (B, N_c) logits.
    pub fn forward(&self, batch: &ClipBatch) -> Result<Tensor> {
        Ok(self.forward_trace(batch)?.logits)
    }

    pub fn forward_features(&self, v_seq: &Tensor, skeleton: &Tensor) -> Result<Tensor> {
        Ok(self.trace_from_features(v_seq, skeleton)?.logits)
    }
}

/// Mean cross-entropy of `logits` (B, N_c) against integer `labels` (B).
pub fn cross_entropy(logits: &Tensor, labels: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::loss::cross_entropy(logits, labels)?)
}

/// Row-wise softmax probabilities.
pub fn softmax_rows(logits: &Tensor) -> Result<Vec<Vec<f32>>> {
    Ok(candle_nn::ops::softmax(logits, 1)?.to_dtype(DType::F32)?.to_vec2::<f32>()?)
}
