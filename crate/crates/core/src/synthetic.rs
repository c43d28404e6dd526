//! Deterministic synthetic fixtures: a stick-figure actor whose arm motion and
//! background colour depend on the exercise class.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{sampled_indices, Label, Span, TimelineAnnotation, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::media::{RgbFrame, Y4mHeader, Y4mWriter};
use crate::model::{Clip, Example};
use crate::pose::{io::write_pose_stream, sequence_features, KeypointId, KeypointLayout, RawKeypoint, RawPoseFrame};

/// Background colour for a class: grey for "no action", evenly spaced hues otherwise.
pub fn class_colour(label: Label) -> [u8; 3] {
    if !label.is_action() {
        return [128, 128, 128];
    }
    let h = (label.index() - 1) as f64 / (NUM_CLASSES - 1) as f64 * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [(40.0 + 180.0 * r) as u8, (40.0 + 180.0 * g) as u8, (40.0 + 180.0 * b) as u8]
}

/// Arm trajectory of one class: (shoulder abduction, elbow flexion) in radians at `t` seconds.
fn arm_angles(label: Label, t: f64, mirrored: bool) -> (f64, f64) {
    let c = label.index();
    if c == 0 {
        return (0.08 + 0.03 * (0.7 * t).sin(), 0.1);
    }
    let freq = 0.4 + 0.15 * (c % 3) as f64;
    let phase = if mirrored && c % 2 == 1 { std::f64::consts::PI } else { 0.0 };
    let s = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * freq * t + phase).cos();
    let abduction = 0.1 + 0.12 * (c % 5) as f64 + (0.4 + 0.25 * (c % 4) as f64) * s;
    let flexion = 0.15 * (c % 3) as f64 + 0.35 * ((c / 3) % 3) as f64 * s;
    (abduction, flexion)
}

/// Renders a class-coloured background with the wrists drawn as white squares.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticActor {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Standard deviation of keypoint jitter, in pixels.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticActor {
    fn default() -> Self {
        SyntheticActor { width: 64, height: 48, fps: 30.0, jitter: 0.3, seed: 0 }
    }
}

impl SyntheticActor {
    /// BODY_25-layout pose for `label` at `frame_index`; lower-body points have zero confidence.
    pub fn pose(&self, label: Label, frame_index: u64) -> RawPoseFrame {
        let t = frame_index as f64 / self.fps;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ frame_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let unit = self.height as f64 * 0.8;
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        let to_px = |p: (f64, f64)| (cx + p.0 * unit, cy + p.1 * unit);

        let mut body: Vec<(usize, (f64, f64))> = vec![
            (0, (0.0, -0.33)),
            (1, (0.0, -0.2)),
            (8, (0.0, 0.35)),
            (15, (-0.03, -0.36)),
            (16, (0.03, -0.36)),
            (17, (-0.07, -0.34)),
            (18, (0.07, -0.34)),
        ];
        // The subject faces the camera: their left side is image right.
        for (side, shoulder_i, elbow_i, wrist_i, mirrored) in [(1.0, 5, 6, 7, false), (-1.0, 2, 3, 4, true)] {
            let shoulder = (0.2 * side, -0.18);
            let (abduction, flexion) = arm_angles(label, t, mirrored);
            let upper = (side * abduction.sin(), abduction.cos());
            let elbow = (shoulder.0 + 0.26 * upper.0, shoulder.1 + 0.26 * upper.1);
            let fa = abduction + flexion;
            let wrist = (elbow.0 + 0.23 * side * fa.sin(), elbow.1 + 0.23 * fa.cos());
            body.extend([(shoulder_i, shoulder), (elbow_i, elbow), (wrist_i, wrist)]);
        }

        let mut keypoints: Vec<RawKeypoint> = (0..25)
            .map(|i| RawKeypoint { id: KeypointId::Index(i), x: 0.0, y: 0.0, z: 0.0, confidence: 0.0 })
            .collect();
        for (i, p) in body {
            let (x, y) = to_px(p);
            keypoints[i] = RawKeypoint {
                id: KeypointId::Index(i),
                x: x + rng.random_range(-1.0..1.0) * self.jitter,
                y: y + rng.random_range(-1.0..1.0) * self.jitter,
                z: rng.random_range(-1.0..1.0) * self.jitter,
                confidence: 0.9,
            };
        }
        RawPoseFrame { frame_index, image_size: (self.width as u32, self.height as u32), keypoints }
    }

    pub fn frame(&self, label: Label, pose: &RawPoseFrame) -> RgbFrame {
        let mut frame = RgbFrame::solid(self.width, self.height, class_colour(label));
        for wrist in [4, 7] {
            let kp = &pose.keypoints[wrist];
            let (x0, y0) = (kp.x.round() as i64, kp.y.round() as i64);
            for y in y0 - 2..=y0 + 2 {
                for x in x0 - 2..=x0 + 2 {
                    if (0..self.width as i64).contains(&x) && (0..self.height as i64).contains(&y) {
                        let o = (y as usize * self.width + x as usize) * 3;
                        frame.data[o..o + 3].copy_from_slice(&[255, 255, 255]);
                    }
                }
            }
        }
        frame
    }

    /// One window sample of `label` starting at `start` (10 frames, every 6th).
    pub fn clip(&self, label: Label, start: u64, image_size: usize) -> Result<Clip> {
        let idx = sampled_indices(start);
        let poses: Vec<RawPoseFrame> = idx.iter().map(|&i| self.pose(label, i)).collect();
        let layout = KeypointLayout::body25();
        let feats = sequence_features(&poses, &layout, crate::pose::DEFAULT_CONFIDENCE_FLOOR)?;
        let mut frames = Vec::new();
        for p in &poses {
            frames.extend(self.frame(label, p).preprocess(image_size));
        }
        Ok(Clip {
            frames,
            skeleton: feats.iter().flat_map(|f| f.to_f32()).collect(),
            num_frames: idx.len(),
            image_size,
        })
    }
}

/// `per_class` examples of every label in `labels`, each from a random start time.
pub fn synthetic_examples(labels: &[Label], per_class: usize, image_size: usize, seed: u64) -> Result<Vec<Example>> {
    let actor = SyntheticActor { seed, ..SyntheticActor::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(labels.len() * per_class);
    for _ in 0..per_class {
        for &label in labels {
            let start = rng.random_range(0..600u64);
            out.push(Example { clip: actor.clip(label, start, image_size)?, label });
        }
    }
    Ok(out)
}

/// Paths and ground truth of a generated session video.
#[derive(Debug, Clone)]
pub struct SessionFixture {
    pub video: PathBuf,
    pub pose: PathBuf,
    pub annotation: TimelineAnnotation,
    pub frame_count: u64,
}

/// Writes `<dir>/<video_id>.y4m` and `<dir>/<video_id>.pose.jsonl` performing the
/// given `(length_in_frames, label)` runs back to back.
pub fn write_session(dir: impl AsRef<Path>, video_id: &str, runs: &[(u64, Label)], actor: &SyntheticActor) -> Result<SessionFixture> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(Error::at(dir))?;
    let (video, pose_path) = crate::model::video_paths(dir, video_id);
    let fps_num = actor.fps.round() as u32;
    let mut writer = Y4mWriter::create(&video, &Y4mHeader::new(actor.width, actor.height, fps_num, 1))?;
    let mut poses = Vec::new();
    let mut spans = Vec::new();
    let mut frame = 0u64;
    for &(len, label) in runs {
        if len == 0 {
            continue;
        }
        if label.is_action() {
            spans.push(Span { start_frame: frame, end_frame: frame + len - 1, label });
        }
        for _ in 0..len {
            let pose = actor.pose(label, frame);
            writer.write_rgb(&actor.frame(label, &pose))?;
            poses.push(pose);
            frame += 1;
        }
    }
    writer.finish()?;
    let file = std::fs::File::create(&pose_path).map_err(Error::at(&pose_path))?;
    write_pose_stream(std::io::BufWriter::new(file), &poses)?;
    Ok(SessionFixture {
        video,
        pose: pose_path,
        annotation: TimelineAnnotation { video_id: video_id.to_string(), fps: actor.fps, spans },
        frame_count: frame,
    })
}

/// Stub window classifier for synthetic sessions: each sampled frame votes for the
/// class whose background colour is nearest, and the window takes the majority vote
/// under the same tie rules as dataset labelling.
#[derive(Debug, Clone)]
pub struct ColourClassifier {
    pub image_size: usize,
    references: Vec<[f32; 3]>,
}

impl ColourClassifier {
    pub fn new(image_size: usize) -> Self {
        let references = (0..NUM_CLASSES as u8)
            .map(|c| {
                let px = RgbFrame::solid(2, 2, class_colour(Label(c))).preprocess(1);
                [px[0], px[1], px[2]]
            })
            .collect();
        ColourClassifier { image_size, references }
    }

    fn frame_label(&self, plane_means: [f32; 3]) -> Label {
        let dist = |r: &[f32; 3]| r.iter().zip(&plane_means).map(|(a, b)| (a - b).powi(2)).sum::<f32>();
        let best = (0..NUM_CLASSES)
            .min_by(|&a, &b| dist(&self.references[a]).total_cmp(&dist(&self.references[b])))
            .expect("classes");
        Label(best as u8)
    }
}

impl crate::segment::WindowClassifier for ColourClassifier {
    fn image_size(&self) -> usize {
        self.image_size
    }

    fn classify(&self, clips: &[Clip]) -> Result<Vec<Vec<f32>>> {
        clips
            .iter()
            .map(|clip| {
                let plane = clip.image_size * clip.image_size;
                let votes: Vec<Label> = clip
                    .frames
                    .chunks(3 * plane)
                    .map(|f| {
                        let mean = |c: usize| f[c * plane..(c + 1) * plane].iter().sum::<f32>() / plane as f32;
                        // The white wrist squares cover only a few percent of the frame.
                        self.frame_label([mean(0), mean(1), mean(2)])
                    })
                    .collect();
                let winner = crate::dataset::majority_label(&votes).ok_or_else(|| Error::validation("clip has no frames"))?;
                let mut p = vec![0.0f32; NUM_CLASSES];
                for v in &votes {
                    p[v.index()] += 1.0;
                }
                p[winner.index()] += 0.5;
                let total: f32 = p.iter().sum();
                Ok(p.into_iter().map(|x| x / total).collect())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::select_keypoints;

    #[test]
    fn poses_use_the_body25_layout() {
        let actor = SyntheticActor::default();
        let kp = select_keypoints(&actor.pose(Label(4), 10), 0.3).unwrap();
        assert!(kp.valid_mask.iter().all(|&v| v));
    }

    #[test]
    fn colours_are_distinct() {
        let mut seen: Vec<[u8; 3]> = (0..NUM_CLASSES as u8).map(|c| class_colour(Label(c))).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), NUM_CLASSES);
    }

    #[test]
    fn session_round_trips_through_the_container() {
        let dir = tempfile::tempdir().unwrap();
        let actor = SyntheticActor::default();
        let s = write_session(dir.path(), "v", &[(20, Label(0)), (30, Label(3))], &actor).unwrap();
        assert_eq!(s.frame_count, 50);
        assert_eq!(s.annotation.spans, [Span { start_frame: 20, end_frame: 49, label: Label(3) }]);
        let mut r = crate::media::Y4mReader::open(&s.video).unwrap();
        assert_eq!(r.frame_count(), 50);
        let mean = r.read_rgb(0).unwrap().mean_rgb();
        assert!((mean[0] - 128.0).abs() < 20.0);
    }
}
