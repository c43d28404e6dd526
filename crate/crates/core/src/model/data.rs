//! Decoding window samples into model inputs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};

use super::recognizer::ClipBatch;
use crate::dataset::{Label, WindowSample};
use crate::error::{Error, Result};
use crate::media::Y4mReader;
use crate::pose::{io::load_pose_stream, sequence_features, FrameFeature, KeypointLayout, RawPoseFrame, FEATURE_DIM};

/// Preprocessed frames and skeleton features of one clip, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    /// N_f x 3 x S x S, CLIP-normalised.
    pub frames: Vec<f32>,
    /// N_f x 17.
    pub skeleton: Vec<f32>,
    pub num_frames: usize,
    pub image_size: usize,
}

impl Clip {
    pub fn batch(clips: &[&Clip], dtype: DType, device: &Device) -> Result<ClipBatch> {
        let first = clips.first().ok_or_else(|| Error::validation("empty batch"))?;
        let (n, s) = (first.num_frames, first.image_size);
        if clips.iter().any(|c| c.num_frames != n || c.image_size != s) {
            return Err(Error::validation("clips in a batch must share frame count and image size"));
        }
        let b = clips.len();
        let frames: Vec<f32> = clips.iter().flat_map(|c| c.frames.iter().copied()).collect();
        let skeleton: Vec<f32> = clips.iter().flat_map(|c| c.skeleton.iter().copied()).collect();
        ClipBatch::new(
            Tensor::from_vec(frames, (b, n, 3, s, s), device)?.to_dtype(dtype)?,
            Tensor::from_vec(skeleton, (b, n, FEATURE_DIM), device)?.to_dtype(dtype)?,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub clip: Clip,
    pub label: Label,
}

/// A session video plus its per-frame skeleton features.
pub struct SessionVideo {
    reader: Y4mReader,
    frame_ids: Vec<u64>,
    features: Vec<FrameFeature>,
}

impl SessionVideo {
    pub fn open(video: impl AsRef<Path>, pose: impl AsRef<Path>, layout: &KeypointLayout, floor: f64) -> Result<Self> {
        let reader = Y4mReader::open(video)?;
        let poses = load_pose_stream(pose)?;
        Self::from_parts(reader, &poses, layout, floor)
    }

    pub fn from_parts(reader: Y4mReader, poses: &[RawPoseFrame], layout: &KeypointLayout, floor: f64) -> Result<Self> {
        let features = sequence_features(poses, layout, floor)?;
        Ok(SessionVideo { reader, frame_ids: poses.iter().map(|p| p.frame_index).collect(), features })
    }

    pub fn frame_count(&self) -> usize {
        self.reader.frame_count()
    }

    pub fn fps(&self) -> f64 {
        self.reader.fps()
    }

    pub fn reader_mut(&mut self) -> &mut Y4mReader {
        &mut self.reader
    }

    /// Features of the pose record nearest to `frame` (earlier record on a tie).
    pub fn skeleton_at(&self, frame: u64) -> &FrameFeature {
        let i = self.frame_ids.partition_point(|&f| f < frame);
        let best = match (i.checked_sub(1), (i < self.frame_ids.len()).then_some(i)) {
            (Some(a), Some(b)) => {
                if frame - self.frame_ids[a] <= self.frame_ids[b] - frame {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("pose stream is non-empty"),
        };
        &self.features[best]
    }

    pub fn clip(&mut self, indices: &[u64], image_size: usize) -> Result<Clip> {
        let mut frames = Vec::with_capacity(indices.len() * 3 * image_size * image_size);
        let mut skeleton = Vec::with_capacity(indices.len() * FEATURE_DIM);
        for &i in indices {
            let frame = self.reader.read_rgb(i as usize)?;
            frames.extend(frame.preprocess(image_size));
            skeleton.extend(self.skeleton_at(i).to_f32());
        }
        Ok(Clip { frames, skeleton, num_frames: indices.len(), image_size })
    }
}

/// `<dir>/<video_id>.y4m` and `<dir>/<video_id>.pose.jsonl`.
pub fn video_paths(dir: impl AsRef<Path>, video_id: &str) -> (PathBuf, PathBuf) {
    let dir = dir.as_ref();
    (dir.join(format!("{video_id}.y4m")), dir.join(format!("{video_id}.pose.jsonl")))
}

/// Decodes every sample's frames from the videos in `video_dir`.
pub fn load_examples(
    samples: &[WindowSample],
    video_dir: impl AsRef<Path>,
    layout: &KeypointLayout,
    floor: f64,
    image_size: usize,
) -> Result<Vec<Example>> {
    let mut videos: HashMap<&str, SessionVideo> = HashMap::new();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        if !videos.contains_key(s.video_id.as_str()) {
            let (video, pose) = video_paths(&video_dir, &s.video_id);
            videos.insert(&s.video_id, SessionVideo::open(video, pose, layout, floor)?);
        }
        let video = videos.get_mut(s.video_id.as_str()).expect("inserted above");
        out.push(Example { clip: video.clip(&s.sampled_frame_indices, image_size)?, label: s.window_label });
    }
    Ok(out)
}
