use serde::{Deserialize, Serialize};

use super::angles::{joint_angle, ANGLE_EPS};
use super::keypoints::{KeypointLayout, Point3, RawPoseFrame, UpperBodyJoint, UpperBodyKeypoints, NUM_UPPER_BODY};
use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 17;
pub const NUM_ANGLES: usize = 4;

/// Joint triples (a, b, c) for the four angles, measured at b, in feature order.
pub const ANGLE_JOINTS: [(UpperBodyJoint, UpperBodyJoint, UpperBodyJoint); NUM_ANGLES] = [
    (UpperBodyJoint::LeftShoulder, UpperBodyJoint::LeftElbow, UpperBodyJoint::LeftWrist),
    (UpperBodyJoint::RightShoulder, UpperBodyJoint::RightElbow, UpperBodyJoint::RightWrist),
    (UpperBodyJoint::LeftElbow, UpperBodyJoint::LeftShoulder, UpperBodyJoint::MidHip),
    (UpperBodyJoint::RightElbow, UpperBodyJoint::RightShoulder, UpperBodyJoint::MidHip),
];

/// Per-frame skeleton feature: 13 normalised keypoint distances followed by the
/// left-elbow, right-elbow, left-shoulder and right-shoulder angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameFeature(pub [f64; FEATURE_DIM]);

impl FrameFeature {
    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    pub fn keypoint_scalars(&self) -> &[f64] {
        &self.0[..NUM_UPPER_BODY]
    }

    pub fn angles(&self) -> &[f64] {
        &self.0[NUM_UPPER_BODY..]
    }

    pub fn to_f32(&self) -> [f32; FEATURE_DIM] {
        self.0.map(|v| v as f32)
    }
}

fn distance(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Reference point and scale for the per-keypoint distances: the shoulder midpoint and
/// shoulder width when both shoulders are known, otherwise the neck (or origin) at unit scale.
fn body_frame(kp: &UpperBodyKeypoints) -> (Point3, f64) {
    use UpperBodyJoint::*;
    if kp.is_valid(LeftShoulder) && kp.is_valid(RightShoulder) {
        let l = kp.point(LeftShoulder);
        let r = kp.point(RightShoulder);
        let mid = [(l[0] + r[0]) / 2.0, (l[1] + r[1]) / 2.0, (l[2] + r[2]) / 2.0];
        let width = distance(l, r);
        (mid, if width > ANGLE_EPS { width } else { 1.0 })
    } else if kp.is_valid(Neck) {
        (kp.point(Neck), 1.0)
    } else {
        ([0.0; 3], 1.0)
    }
}

/// Computes the 17-dimensional feature for one frame.
///
/// Invalid keypoints contribute a zero scalar and zero every angle that uses them.
pub fn frame_features(kp: &UpperBodyKeypoints) -> Result<FrameFeature> {
    for joint in UpperBodyJoint::ALL {
        if kp.is_valid(joint) && kp.point(joint).iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite coordinate for {}", joint.name())));
        }
    }
    let (center, scale) = body_frame(kp);
    let mut values = [0.0; FEATURE_DIM];
    for joint in UpperBodyJoint::ALL {
        if kp.is_valid(joint) {
            values[joint.index()] = distance(kp.point(joint), center) / scale;
        }
    }
    for (slot, (a, b, c)) in ANGLE_JOINTS.iter().enumerate() {
        if kp.is_valid(*a) && kp.is_valid(*b) && kp.is_valid(*c) {
            values[NUM_UPPER_BODY + slot] = joint_angle(kp.point(*a), kp.point(*b), kp.point(*c), ANGLE_EPS);
        }
    }
    Ok(FrameFeature(values))
}

/// Fills missing keypoints by linear interpolation (in frame index) between the nearest
/// valid frames on each side; a gap touching the sequence boundary copies the nearest
/// valid value. A keypoint that is never valid stays at zero with its mask cleared.
pub fn impute_keypoints(frames: &[RawPoseFrame], layout: &KeypointLayout, confidence_floor: f64) -> Result<Vec<UpperBodyKeypoints>> {
    if frames.is_empty() {
        return Err(Error::validation("empty pose sequence"));
    }
    for pair in frames.windows(2) {
        if pair[1].frame_index <= pair[0].frame_index {
            return Err(Error::validation(format!(
                "pose frames must have ascending frame_index ({} then {})",
                pair[0].frame_index, pair[1].frame_index
            )));
        }
    }
    let mut selected = frames
        .iter()
        .map(|f| {
            f.validate()?;
            layout.select(f, confidence_floor)
        })
        .collect::<Result<Vec<_>>>()?;

    for joint in UpperBodyJoint::ALL {
        let j = joint.index();
        let valid: Vec<usize> = (0..selected.len()).filter(|&t| selected[t].valid_mask[j]).collect();
        if valid.is_empty() {
            for kp in &mut selected {
                kp.points[j] = [0.0; 3];
            }
            continue;
        }
        let mut next: usize = 0;
        for t in 0..selected.len() {
            if selected[t].valid_mask[j] {
                next += 1;
                continue;
            }
            let before = next.checked_sub(1).map(|i| valid[i]);
            let after = valid.get(next).copied();
            let p = match (before, after) {
                (Some(b), Some(a)) => {
                    let fb = frames[b].frame_index as f64;
                    let fa = frames[a].frame_index as f64;
                    let w = (frames[t].frame_index as f64 - fb) / (fa - fb);
                    let pb = selected[b].points[j];
                    let pa = selected[a].points[j];
                    [pb[0] + w * (pa[0] - pb[0]), pb[1] + w * (pa[1] - pb[1]), pb[2] + w * (pa[2] - pb[2])]
                }
                (Some(b), None) => selected[b].points[j],
                (None, Some(a)) => selected[a].points[j],
                (None, None) => unreachable!("at least one valid frame"),
            };
            selected[t].points[j] = p;
            selected[t].valid_mask[j] = true;
        }
    }
    Ok(selected)
}

/// Feature matrix (one row per input frame) after missing-keypoint imputation.
pub fn sequence_features(frames: &[RawPoseFrame], layout: &KeypointLayout, confidence_floor: f64) -> Result<Vec<FrameFeature>> {
    impute_keypoints(frames, layout, confidence_floor)?
        .iter()
        .map(frame_features)
        .collect()
}
