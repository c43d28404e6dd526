use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confidence below which a keypoint is treated as missing.
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.3;

pub const NUM_UPPER_BODY: usize = 13;

/// The 13 upper-body keypoints, in the fixed order used by every feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperBodyJoint {
    Nose = 0,
    Neck = 1,
    LeftShoulder = 2,
    RightShoulder = 3,
    LeftElbow = 4,
    RightElbow = 5,
    LeftWrist = 6,
    RightWrist = 7,
    MidHip = 8,
    LeftEye = 9,
    RightEye = 10,
    LeftEar = 11,
    RightEar = 12,
}

impl UpperBodyJoint {
    pub const ALL: [UpperBodyJoint; NUM_UPPER_BODY] = [
        UpperBodyJoint::Nose,
        UpperBodyJoint::Neck,
        UpperBodyJoint::LeftShoulder,
        UpperBodyJoint::RightShoulder,
        UpperBodyJoint::LeftElbow,
        UpperBodyJoint::RightElbow,
        UpperBodyJoint::LeftWrist,
        UpperBodyJoint::RightWrist,
        UpperBodyJoint::MidHip,
        UpperBodyJoint::LeftEye,
        UpperBodyJoint::RightEye,
        UpperBodyJoint::LeftEar,
        UpperBodyJoint::RightEar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UpperBodyJoint::Nose => "nose",
            UpperBodyJoint::Neck => "neck",
            UpperBodyJoint::LeftShoulder => "left_shoulder",
            UpperBodyJoint::RightShoulder => "right_shoulder",
            UpperBodyJoint::LeftElbow => "left_elbow",
            UpperBodyJoint::RightElbow => "right_elbow",
            UpperBodyJoint::LeftWrist => "left_wrist",
            UpperBodyJoint::RightWrist => "right_wrist",
            UpperBodyJoint::MidHip => "mid_hip",
            UpperBodyJoint::LeftEye => "left_eye",
            UpperBodyJoint::RightEye => "right_eye",
            UpperBodyJoint::LeftEar => "left_ear",
            UpperBodyJoint::RightEar => "right_ear",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub type Point3 = [f64; 3];

/// A keypoint reference in the estimator output: either its layout index or its name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeypointId {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawKeypoint {
    pub id: KeypointId,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub confidence: f64,
}

impl RawKeypoint {
    pub fn position(&self) -> Point3 {
        [self.x, self.y, self.z]
    }
}

/// One frame of full-body pose estimator output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPoseFrame {
    pub frame_index: u64,
    /// (width, height) in pixels.
    pub image_size: (u32, u32),
    pub keypoints: Vec<RawKeypoint>,
}

impl RawPoseFrame {
    pub fn validate(&self) -> Result<()> {
        for kp in &self.keypoints {
            if !(0.0..=1.0).contains(&kp.confidence) {
                return Err(Error::validation(format!(
                    "frame {}: keypoint {:?} confidence {} outside [0, 1]",
                    self.frame_index, kp.id, kp.confidence
                )));
            }
        }
        Ok(())
    }
}

/// The 13 selected upper-body points plus a per-point validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBodyKeypoints {
    pub points: [Point3; NUM_UPPER_BODY],
    pub valid_mask: [bool; NUM_UPPER_BODY],
}

impl UpperBodyKeypoints {
    pub fn point(&self, joint: UpperBodyJoint) -> Point3 {
        self.points[joint.index()]
    }

    pub fn is_valid(&self, joint: UpperBodyJoint) -> bool {
        self.valid_mask[joint.index()]
    }
}

/// Maps estimator keypoint indices onto the 13 upper-body names.
///
/// Loaded from a TOML file so pose providers other than the default can be adapted:
///
/// ```toml
/// name = "openpose-body25"
/// [indices]
/// nose = 0
/// neck = 1
/// # ...
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointLayout {
    pub name: String,
    pub indices: BTreeMap<String, usize>,
}

const BODY25_TOML: &str = include_str!("../../assets/layouts/openpose_body25.toml");

impl KeypointLayout {
    /// The OpenPose BODY_25 layout.
    pub fn body25() -> Self {
        Self::from_toml_str(BODY25_TOML).expect("bundled layout parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let layout: KeypointLayout =
            toml::from_str(text).map_err(|e| Error::config(format!("keypoint layout: {e}")))?;
        for joint in UpperBodyJoint::ALL {
            if !layout.indices.contains_key(joint.name()) {
                return Err(Error::MissingKeypoint(joint.name().to_string()));
            }
        }
        Ok(layout)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::at(path))?;
        Self::from_toml_str(&text)
    }

    fn find<'a>(&self, frame: &'a RawPoseFrame, joint: UpperBodyJoint) -> Option<&'a RawKeypoint> {
        let index = self.indices.get(joint.name()).copied();
        frame.keypoints.iter().find(|kp| match &kp.id {
            KeypointId::Name(n) => n == joint.name(),
            KeypointId::Index(i) => Some(*i) == index,
        })
    }

    /// Picks the 13 upper-body points out of a full-body frame.
    pub fn select(&self, frame: &RawPoseFrame, confidence_floor: f64) -> Result<UpperBodyKeypoints> {
        let mut points = [[0.0; 3]; NUM_UPPER_BODY];
        let mut valid_mask = [false; NUM_UPPER_BODY];
        for joint in UpperBodyJoint::ALL {
            let kp = self
                .find(frame, joint)
                .ok_or_else(|| Error::MissingKeypoint(joint.name().to_string()))?;
            points[joint.index()] = kp.position();
            valid_mask[joint.index()] = kp.confidence >= confidence_floor
                && kp.position().iter().all(|v| v.is_finite());
        }
        Ok(UpperBodyKeypoints { points, valid_mask })
    }
}

impl Default for KeypointLayout {
    fn default() -> Self {
        Self::body25()
    }
}

/// [`KeypointLayout::select`] with the default BODY_25 layout.
pub fn select_keypoints(frame: &RawPoseFrame, confidence_floor: f64) -> Result<UpperBodyKeypoints> {
    KeypointLayout::body25().select(frame, confidence_floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body25_frame(conf: f64) -> RawPoseFrame {
        RawPoseFrame {
            frame_index: 0,
            image_size: (640, 480),
            keypoints: (0..25)
                .map(|i| RawKeypoint {
                    id: KeypointId::Index(i),
                    x: i as f64,
                    y: 100.0 + i as f64,
                    z: 200.0 + i as f64,
                    confidence: conf,
                })
                .collect(),
        }
    }

    #[test]
    fn full_confidence_is_all_valid() {
        let kp = select_keypoints(&body25_frame(1.0), 0.3).unwrap();
        assert!(kp.valid_mask.iter().all(|&v| v));
    }

    #[test]
    fn low_confidence_marks_only_that_point() {
        let mut frame = body25_frame(1.0);
        // BODY_25 index 7 is the left wrist.
        frame.keypoints[7].confidence = 0.0;
        let kp = select_keypoints(&frame, 0.3).unwrap();
        for joint in UpperBodyJoint::ALL {
            assert_eq!(kp.is_valid(joint), joint != UpperBodyJoint::LeftWrist, "{joint:?}");
        }
    }

    #[test]
    fn body25_points_come_out_in_documented_order() {
        let kp = select_keypoints(&body25_frame(1.0), 0.3).unwrap();
        // nose, neck, LShoulder(5), RShoulder(2), LElbow(6), RElbow(3), LWrist(7), RWrist(4),
        // MidHip(8), LEye(16), REye(15), LEar(18), REar(17)
        let expected = [0, 1, 5, 2, 6, 3, 7, 4, 8, 16, 15, 18, 17];
        for (slot, &src) in expected.iter().enumerate() {
            assert_eq!(kp.points[slot], [src as f64, 100.0 + src as f64, 200.0 + src as f64]);
        }
    }

    #[test]
    fn named_keypoints_are_accepted() {
        let frame = RawPoseFrame {
            frame_index: 3,
            image_size: (10, 10),
            keypoints: UpperBodyJoint::ALL
                .iter()
                .map(|j| RawKeypoint {
                    id: KeypointId::Name(j.name().into()),
                    x: j.index() as f64,
                    y: 0.0,
                    z: 0.0,
                    confidence: 0.9,
                })
                .collect(),
        };
        let kp = select_keypoints(&frame, 0.3).unwrap();
        assert_eq!(kp.point(UpperBodyJoint::RightEar)[0], 12.0);
    }

    #[test]
    fn missing_point_is_named_in_error() {
        let mut frame = body25_frame(1.0);
        frame.keypoints.retain(|kp| kp.id != KeypointId::Index(17));
        let err = select_keypoints(&frame, 0.3).unwrap_err();
        assert!(matches!(err, Error::MissingKeypoint(ref n) if n == "right_ear"), "{err}");
    }

    #[test]
    fn layout_without_all_names_is_rejected() {
        let err = KeypointLayout::from_toml_str("name = \"x\"\n[indices]\nnose = 0\n").unwrap_err();
        assert!(matches!(err, Error::MissingKeypoint(_)));
    }
}
