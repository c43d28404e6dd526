//! Whole-video inference: window predictions -> per-frame labels -> action segments
//! -> sub-clips.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{extract_windows, majority_label, sampled_indices, window_end, Label, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::media::copy_frame_range;
use crate::model::{predict, Clip, Example, RecognitionModel, SessionVideo};
use crate::pose::KeypointLayout;

/// Anything that maps window clips to class probabilities.
pub trait WindowClassifier {
    fn image_size(&self) -> usize;

    /// One probability row (summing to 1) per clip.
    fn classify(&self, clips: &[Clip]) -> Result<Vec<Vec<f32>>>;
}

impl WindowClassifier for RecognitionModel {
    fn image_size(&self) -> usize {
        self.config().image_size
    }

    fn classify(&self, clips: &[Clip]) -> Result<Vec<Vec<f32>>> {
        let examples: Vec<Example> = clips.iter().map(|c| Example { clip: c.clone(), label: Label::NO_ACTION }).collect();
        predict(self, &examples, 8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub start_frame: u64,
    pub label: Label,
    /// Probability of `label`.
    pub confidence: f32,
    pub probabilities: Vec<f32>,
}

impl WindowPrediction {
    pub fn from_probabilities(start_frame: u64, probabilities: Vec<f32>) -> Self {
        let best = crate::eval::argmax(&probabilities);
        WindowPrediction { start_frame, label: Label(best as u8), confidence: probabilities[best], probabilities }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSegment {
    pub video_id: String,
    pub label: Label,
    pub start_frame: u64,
    /// Inclusive.
    pub end_frame: u64,
    pub mean_confidence: f32,
    pub flagged_for_review: bool,
    pub subclip_uri: Option<String>,
}

impl ActionSegment {
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Action runs shorter than this are absorbed or dropped (45 = 1.5 s at 30 fps).
    pub min_segment_frames: u64,
    /// Width of the per-frame mode filter (odd).
    pub filter_width: usize,
    /// Segments whose mean window confidence falls below this are flagged, not dropped.
    pub review_threshold: f32,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams { min_segment_frames: 45, filter_width: 5, review_threshold: 0.4 }
    }
}

/// Opens a session video and its pose sidecar; a missing sidecar is a dependency error.
pub fn open_session(video: &Path, pose: &Path, layout: &KeypointLayout, floor: f64) -> Result<SessionVideo> {
    if !pose.exists() {
        return Err(Error::Dependency(format!("pose stream {} not found", pose.display())));
    }
    SessionVideo::open(video, pose, layout, floor)
}

/// One prediction per window of the video, in window order.
pub fn predict_windows(video: &mut SessionVideo, classifier: &dyn WindowClassifier, batch_size: usize) -> Result<Vec<WindowPrediction>> {
    let starts = extract_windows(video.frame_count() as i64)?;
    let mut out = Vec::with_capacity(starts.len());
    for chunk in starts.chunks(batch_size.max(1)) {
        let clips = chunk
            .iter()
            .map(|&s| video.clip(&sampled_indices(s), classifier.image_size()))
            .collect::<Result<Vec<_>>>()?;
        let probs = classifier.classify(&clips)?;
        if probs.len() != clips.len() || probs.iter().any(|p| p.len() != NUM_CLASSES) {
            return Err(Error::validation("classifier returned malformed probabilities"));
        }
        out.extend(chunk.iter().zip(probs).map(|(&s, p)| WindowPrediction::from_probabilities(s, p)));
    }
    Ok(out)
}

/// Per-frame labels by majority vote of the windows covering each frame; uncovered
/// frames take the label of the nearest window (earlier window on equal distance).
pub fn frame_labels(predictions: &[WindowPrediction], frame_count: u64) -> Vec<Label> {
    if predictions.is_empty() {
        return vec![Label::NO_ACTION; frame_count as usize];
    }
    let mut sorted: Vec<&WindowPrediction> = predictions.iter().collect();
    sorted.sort_by_key(|p| p.start_frame);
    let mut votes = Vec::new();
    (0..frame_count)
        .map(|f| {
            votes.clear();
            let first = sorted.partition_point(|p| window_end(p.start_frame) < f);
            votes.extend(sorted[first..].iter().take_while(|p| p.start_frame <= f).map(|p| p.label));
            if let Some(l) = majority_label(&votes) {
                return l;
            }
            let distance = |p: &WindowPrediction| {
                if f < p.start_frame {
                    p.start_frame - f
                } else {
                    f - window_end(p.start_frame)
                }
            };
            sorted.iter().min_by_key(|p| distance(p)).expect("non-empty").label
        })
        .collect()
}

/// Sliding mode filter; the centre label survives whenever it ties for the maximum.
pub fn mode_filter(labels: &[Label], width: usize) -> Vec<Label> {
    let half = width / 2;
    (0..labels.len())
        .map(|i| {
            let window = &labels[i.saturating_sub(half)..(i + half + 1).min(labels.len())];
            let count = |l: Label| window.iter().filter(|&&x| x == l).count();
            let centre = count(labels[i]);
            let best = majority_label(window).expect("non-empty");
            if count(best) > centre {
                best
            } else {
                labels[i]
            }
        })
        .collect()
}

/// Maximal runs of equal labels as `(start, end_inclusive, label)`.
pub fn runs(labels: &[Label]) -> Vec<(u64, u64, Label)> {
    let mut out: Vec<(u64, u64, Label)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.2 == l => last.1 = i as u64,
            _ => out.push((i as u64, i as u64, l)),
        }
    }
    out
}

/// Mode-filters the labels, resolves short action runs, and returns the action runs.
///
/// An action run shorter than `min_segment_frames` takes its neighbours' label when
/// both neighbours agree, and becomes "no action" otherwise; this repeats until every
/// remaining action run is long enough.
pub fn smooth_and_segment(labels: &[Label], params: &SegmentParams) -> Vec<(u64, u64, Label)> {
    let mut labels = mode_filter(labels, params.filter_width.max(1));
    loop {
        let rs = runs(&labels);
        let short = rs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.2.is_action() && r.1 - r.0 + 1 < params.min_segment_frames)
            .min_by_key(|(_, r)| (r.1 - r.0, r.0));
        let Some((i, &(start, end, _))) = short else {
            return rs.into_iter().filter(|r| r.2.is_action()).collect();
        };
        let prev = i.checked_sub(1).map(|j| rs[j].2);
        let next = rs.get(i + 1).map(|r| r.2);
        let fill = match (prev, next) {
            (Some(a), Some(b)) if a == b => a,
            _ => Label::NO_ACTION,
        };
        labels[start as usize..=end as usize].fill(fill);
    }
}

/// Frame labels implied by a segment list (everything else "no action").
pub fn segments_to_frame_labels(segments: &[ActionSegment], frame_count: u64) -> Vec<Label> {
    let mut labels = vec![Label::NO_ACTION; frame_count as usize];
    for s in segments {
        let end = s.end_frame.min(frame_count.saturating_sub(1));
        if s.start_frame <= end {
            labels[s.start_frame as usize..=end as usize].fill(s.label);
        }
    }
    labels
}

/// Full window-to-segment pass for one video.
pub fn segment_video(video_id: &str, predictions: &[WindowPrediction], frame_count: u64, params: &SegmentParams) -> Vec<ActionSegment> {
    let labels = frame_labels(predictions, frame_count);
    smooth_and_segment(&labels, params)
        .into_iter()
        .map(|(start, end, label)| {
            let overlapping: Vec<&WindowPrediction> = predictions
                .iter()
                .filter(|p| p.start_frame <= end && window_end(p.start_frame) >= start)
                .collect();
            let members: Vec<&&WindowPrediction> = overlapping.iter().filter(|p| p.label == label).collect();
            let confs: Vec<f32> = if members.is_empty() {
                overlapping.iter().map(|p| p.confidence).collect()
            } else {
                members.iter().map(|p| p.confidence).collect()
            };
            let mean_confidence = if confs.is_empty() { 0.0 } else { confs.iter().sum::<f32>() / confs.len() as f32 };
            ActionSegment {
                video_id: video_id.to_string(),
                label,
                start_frame: start,
                end_frame: end,
                mean_confidence,
                flagged_for_review: mean_confidence < params.review_threshold,
                subclip_uri: None,
            }
        })
        .collect()
}

/// Writes one `.y4m` per segment into `out_dir` and records its path as the URI.
pub fn extract_subclips(video: &mut SessionVideo, segments: &mut [ActionSegment], out_dir: impl AsRef<Path>) -> Result<()> {
    if segments.is_empty() {
        return Ok(());
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(Error::at(out_dir))?;
    for (i, seg) in segments.iter_mut().enumerate() {
        let path = out_dir.join(format!("{}_seg{i:03}_{}-{}.y4m", seg.video_id, seg.start_frame, seg.end_frame));
        copy_frame_range(video.reader_mut(), seg.start_frame as usize, seg.end_frame as usize, &path)
            .map_err(|e| Error::media(format!("segment {i} of {}: {e}", seg.video_id)))?;
        seg.subclip_uri = Some(path.to_string_lossy().into_owned());
    }
    Ok(())
}
