use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::annotation::TimelineAnnotation;
use super::label::{resolve_window_label, Label};
use super::windows::{extract_windows, sampled_indices, FRAMES_PER_WINDOW};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub frame_count: u64,
}

/// How whole videos are assigned to splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitConfig {
    /// Explicit lists; a video may appear in at most one of them.
    Explicit {
        #[serde(default)]
        train: Vec<String>,
        #[serde(default)]
        val: Vec<String>,
        #[serde(default)]
        test: Vec<String>,
    },
    /// The first `train_count` videos (input order) train; the rest are shuffled with
    /// `seed` and split in half between validation and test (validation takes the odd one).
    FirstTrainRestShuffled { train_count: usize, seed: u64 },
}

/// One training unit: 10 frames sampled from a 60-frame window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSample {
    pub video_id: String,
    pub split: Split,
    pub start_frame: u64,
    pub sampled_frame_indices: [u64; FRAMES_PER_WINDOW],
    pub per_frame_labels: [Label; FRAMES_PER_WINDOW],
    pub window_label: Label,
}

impl WindowSample {
    pub fn file_name(&self) -> String {
        format!("{}_{:08}.json", self.video_id, self.start_frame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: Option<u64>,
    /// video id -> split
    pub splits: BTreeMap<String, Split>,
    pub sample_counts: BTreeMap<Split, usize>,
    /// split -> label -> count
    pub label_histogram: BTreeMap<Split, BTreeMap<Label, usize>>,
}

impl DatasetManifest {
    pub fn videos_in(&self, split: Split) -> impl Iterator<Item = &str> {
        self.splits.iter().filter(move |(_, s)| **s == split).map(|(v, _)| v.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn assign_splits(videos: &[VideoEntry], config: &SplitConfig) -> Result<(BTreeMap<String, Split>, Option<u64>)> {
    let mut assignment = BTreeMap::new();
    match config {
        SplitConfig::Explicit { train, val, test } => {
            for (split, ids) in [(Split::Train, train), (Split::Val, val), (Split::Test, test)] {
                for id in ids {
                    if let Some(prev) = assignment.insert(id.clone(), split) {
                        return Err(Error::validation(format!(
                            "video {id} assigned to both {} and {}",
                            prev.as_str(),
                            split.as_str()
                        )));
                    }
                }
            }
            for v in videos {
                if !assignment.contains_key(&v.video_id) {
                    return Err(Error::validation(format!("video {} not assigned to any split", v.video_id)));
                }
            }
            if let Some(extra) = assignment.keys().find(|id| !videos.iter().any(|v| &v.video_id == *id)) {
                return Err(Error::validation(format!("split config names unknown video {extra}")));
            }
            Ok((assignment, None))
        }
        SplitConfig::FirstTrainRestShuffled { train_count, seed } => {
            if *train_count > videos.len() {
                return Err(Error::validation(format!(
                    "train_count {train_count} exceeds {} videos",
                    videos.len()
                )));
            }
            for v in &videos[..*train_count] {
                assignment.insert(v.video_id.clone(), Split::Train);
            }
            let mut rest: Vec<&VideoEntry> = videos[*train_count..].iter().collect();
            rest.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let n_val = rest.len().div_ceil(2);
            for (i, v) in rest.iter().enumerate() {
                assignment.insert(v.video_id.clone(), if i < n_val { Split::Val } else { Split::Test });
            }
            Ok((assignment, Some(*seed)))
        }
    }
}

/// Windows every video, labels each window and assigns whole videos to splits.
///
/// Samples come out in input video order, then by start frame.
pub fn build_dataset(
    videos: &[VideoEntry],
    annotations: &HashMap<String, TimelineAnnotation>,
    split_config: &SplitConfig,
) -> Result<(DatasetManifest, Vec<WindowSample>)> {
    let mut seen = std::collections::HashSet::new();
    for v in videos {
        if !seen.insert(v.video_id.as_str()) {
            return Err(Error::validation(format!("duplicate video id {}", v.video_id)));
        }
    }
    let (splits, seed) = assign_splits(videos, split_config)?;

    let per_video: Vec<Vec<WindowSample>> = videos
        .par_iter()
        .map(|video| {
            let ann = annotations
                .get(&video.video_id)
                .ok_or_else(|| Error::validation(format!("no annotation for video {}", video.video_id)))?;
            ann.validate()?;
            let split = splits[&video.video_id];
            extract_windows(video.frame_count as i64)?
                .into_iter()
                .map(|start| {
                    let idx = sampled_indices(start);
                    let per_frame_labels = idx.map(|f| ann.label_at(f));
                    Ok(WindowSample {
                        video_id: video.video_id.clone(),
                        split,
                        start_frame: start,
                        sampled_frame_indices: idx,
                        per_frame_labels,
                        window_label: resolve_window_label(&per_frame_labels)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let samples: Vec<WindowSample> = per_video.into_iter().flatten().collect();

    let mut sample_counts: BTreeMap<Split, usize> = Split::ALL.iter().map(|s| (*s, 0)).collect();
    let mut label_histogram: BTreeMap<Split, BTreeMap<Label, usize>> =
        Split::ALL.iter().map(|s| (*s, BTreeMap::new())).collect();
    for s in &samples {
        *sample_counts.entry(s.split).or_default() += 1;
        *label_histogram.entry(s.split).or_default().entry(s.window_label).or_default() += 1;
    }
    let manifest = DatasetManifest { version: MANIFEST_VERSION, seed, splits, sample_counts, label_histogram };
    Ok((manifest, samples))
}

/// Writes `manifest.json` and one JSON record per sample under `samples/<split>/`.
pub fn write_dataset(dir: impl AsRef<Path>, manifest: &DatasetManifest, samples: &[WindowSample]) -> Result<()> {
    let dir = dir.as_ref();
    for split in Split::ALL {
        let sub = dir.join("samples").join(split.as_str());
        std::fs::create_dir_all(&sub).map_err(Error::at(&sub))?;
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json()?).map_err(Error::at(&path))?;
    for s in samples {
        let path = dir.join("samples").join(s.split.as_str()).join(s.file_name());
        std::fs::write(&path, serde_json::to_vec(s)?).map_err(Error::at(&path))?;
    }
    Ok(())
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = dir.as_ref().join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(Error::at(&path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::config(format!("unsupported manifest version {}", manifest.version)));
    }
    Ok(manifest)
}

/// Loads the sample records of one split, sorted by (video, start frame).
pub fn load_samples(dir: impl AsRef<Path>, split: Split) -> Result<Vec<WindowSample>> {
    let sub = dir.as_ref().join("samples").join(split.as_str());
    let mut samples = Vec::new();
    for entry in std::fs::read_dir(&sub).map_err(Error::at(&sub))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let bytes = std::fs::read(&path).map_err(Error::at(&path))?;
            samples.push(serde_json::from_slice::<WindowSample>(&bytes)?);
        }
    }
    samples.sort_by(|a, b| (&a.video_id, a.start_frame).cmp(&(&b.video_id, b.start_frame)));
    Ok(samples)
}
