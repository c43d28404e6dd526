//! Skeleton-guided, motion-prompted video/text recogniser and its training loop.

mod checkpoint;
mod classes;
mod config;
mod data;
mod head;
pub mod layers;
mod params;
mod recognizer;
mod skeleton;
mod streams;
mod text_encoder;
mod tokenizer;
mod train;
mod vision;

pub use candle_core::{DType, Device};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, read_checkpoint_meta, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use classes::{ClassCatalog, ClassDescription};
pub use config::{AblationVariant, ModelConfig, SkeletonEncoderKind, SpatialFusionKind, TextConfig, VisionConfig};
pub use data::{load_examples, video_paths, Clip, Example, SessionVideo};
pub use head::{cosine_logits, CrossModalEnhancer, COSINE_EPS};
pub use params::ParamStore;
pub use recognizer::{cross_entropy, softmax_rows, ClipBatch, ForwardTrace, RecognitionModel};
pub use skeleton::SkeletonEncoder;
pub use streams::{frame_differences, fuse_streams, MotionAdapter, MotionTransformer, SpatialFusion, MAX_FRAMES};
pub use text_encoder::{TextEncoder, TokenizedClasses};
pub use tokenizer::{HashTokenizer, END_TOKEN, PAD_TOKEN, START_TOKEN};
pub use train::{accuracy, cosine_lr, evaluate, predict, train, EpochRecord, TrainConfig, TrainHistory};
pub use vision::VisionEncoder;
