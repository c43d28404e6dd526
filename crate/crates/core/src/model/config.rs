use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionConfig {
    pub patch_size: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextConfig {
    pub vocab_size: usize,
    /// Total sequence length including the prepended motion prompt.
    pub context_len: usize,
    pub layers: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkeletonEncoderKind {
    /// Bidirectional LSTM over the frame sequence.
    BiLstm,
    /// Per-frame MLP with the same hidden width as the LSTM output.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialFusionKind {
    /// Transformer decoder: frame features query the skeleton embedding.
    GuidedTransformer,
    /// MLP over concatenated frame and skeleton features, hidden width matching the
    /// decoder's feed-forward width.
    ConcatMlp,
}

/// The four model variants compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    NoSkeleton,
    MlpSkeletonEncoder,
    MlpGuidedFuse,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Full,
        AblationVariant::NoSkeleton,
        AblationVariant::MlpSkeletonEncoder,
        AblationVariant::MlpGuidedFuse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoSkeleton => "no_skeleton",
            AblationVariant::MlpSkeletonEncoder => "mlp_skeleton_encoder",
            AblationVariant::MlpGuidedFuse => "mlp_guided_fuse",
        }
    }

    pub fn apply(self, config: &ModelConfig) -> ModelConfig {
        let mut c = config.clone();
        c.use_skeleton = true;
        c.skeleton_encoder = SkeletonEncoderKind::BiLstm;
        c.spatial_fusion = SpatialFusionKind::GuidedTransformer;
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoSkeleton => c.use_skeleton = false,
            AblationVariant::MlpSkeletonEncoder => c.skeleton_encoder = SkeletonEncoderKind::Mlp,
            AblationVariant::MlpGuidedFuse => c.spatial_fusion = SpatialFusionKind::ConcatMlp,
        }
        c
    }
}

impl std::str::FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown ablation variant `{s}`")))
    }
}

/// Architecture knobs for the recognition model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Shared embedding width D.
    pub embed_dim: usize,
    pub num_frames: usize,
    pub num_classes: usize,
    pub image_size: usize,
    pub vision: VisionConfig,
    pub text: TextConfig,
    /// Hidden size of each LSTM direction.
    pub skeleton_hidden: usize,
    pub skeleton_encoder: SkeletonEncoderKind,
    pub spatial_fusion: SpatialFusionKind,
    /// Without skeleton input the spatial stream is the frame features themselves.
    pub use_skeleton: bool,
    pub guided_layers: usize,
    pub guided_heads: usize,
    pub motion_layers: usize,
    pub motion_heads: usize,
    pub cross_heads: usize,
    pub ffn_mult: usize,
    /// Motion prompt tokens prepended to each class description.
    pub prompt_len: usize,
    /// Initial log temperature; exp(tau_init) ~ 14.29.
    pub tau_init: f64,
    /// Upper clamp on tau; exp(tau_max) = 100.
    pub tau_max: f64,
    pub freeze_vision: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// ViT-B/32-sized encoders.
    pub fn clip_b32() -> Self {
        ModelConfig {
            embed_dim: 512,
            num_frames: 10,
            num_classes: 16,
            image_size: 224,
            vision: VisionConfig { patch_size: 32, width: 768, layers: 12, heads: 12 },
            text: TextConfig { vocab_size: 49_408, context_len: 77, layers: 12, heads: 8 },
            skeleton_hidden: 256,
            skeleton_encoder: SkeletonEncoderKind::BiLstm,
            spatial_fusion: SpatialFusionKind::GuidedTransformer,
            use_skeleton: true,
            guided_layers: 2,
            guided_heads: 8,
            motion_layers: 2,
            motion_heads: 8,
            cross_heads: 8,
            ffn_mult: 4,
            prompt_len: 4,
            tau_init: (1.0f64 / 0.07).ln(),
            tau_max: 100f64.ln(),
            freeze_vision: true,
            seed: 0,
        }
    }

    /// Small widths for tests and CPU experiments.
    pub fn tiny() -> Self {
        ModelConfig {
            embed_dim: 32,
            image_size: 32,
            vision: VisionConfig { patch_size: 8, width: 32, layers: 1, heads: 4 },
            text: TextConfig { vocab_size: 2048, context_len: 40, layers: 1, heads: 4 },
            skeleton_hidden: 32,
            ..ModelConfig::clip_b32()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.embed_dim;
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::config(msg.to_string())) };
        check(self.num_frames >= 2, "num_frames must be at least 2")?;
        check(self.num_classes >= 1, "num_classes must be positive")?;
        check(self.prompt_len >= 1, "prompt_len must be at least 1")?;
        check(self.image_size % self.vision.patch_size == 0, "image_size must be a multiple of patch_size")?;
        for (heads, width, what) in [
            (self.vision.heads, self.vision.width, "vision"),
            (self.text.heads, d, "text"),
            (self.guided_heads, d, "guided"),
            (self.motion_heads, d, "motion"),
            (self.cross_heads, d, "cross"),
        ] {
            check(heads > 0 && width % heads == 0, &format!("{what} heads must divide width {width}"))?;
        }
        check(self.text.context_len > self.prompt_len + 2, "text context too short for the motion prompt")?;
        check(self.tau_init <= self.tau_max, "tau_init above tau_max")?;
        Ok(())
    }

    /// Token budget left for a class description (including start/end tokens).
    pub fn description_len(&self) -> usize {
        self.text.context_len - self.prompt_len
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::clip_b32()
    }
}
