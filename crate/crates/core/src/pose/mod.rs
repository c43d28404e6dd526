//! Upper-body skeleton features from 3D pose estimator output.

mod angles;
mod features;
pub mod io;
mod keypoints;

pub use angles::{joint_angle, joint_angle_gradient, ANGLE_EPS};
pub use features::{frame_features, impute_keypoints, sequence_features, FrameFeature, ANGLE_JOINTS, FEATURE_DIM, NUM_ANGLES};
pub use keypoints::{
    select_keypoints, KeypointId, KeypointLayout, Point3, RawKeypoint, RawPoseFrame, UpperBodyJoint, UpperBodyKeypoints,
    DEFAULT_CONFIDENCE_FLOOR, NUM_UPPER_BODY,
};
