//! Line-delimited JSON keypoint streams, one [`RawPoseFrame`] per line:
//!
//! ```text
//! {"frame_index":0,"image_size":[720,1280],"keypoints":[{"id":0,"x":360.0,"y":210.5,"z":0.4,"confidence":0.93}, ...]}
//! ```
//!
//! `id` is either the estimator's keypoint index or one of the 13 upper-body names.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::keypoints::RawPoseFrame;
use crate::error::{Error, Result};

pub fn read_pose_stream(reader: impl std::io::Read) -> Result<Vec<RawPoseFrame>> {
    let mut frames = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: RawPoseFrame = serde_json::from_str(&line)
            .map_err(|e| Error::validation(format!("pose stream line {}: {e}", lineno + 1)))?;
        frames.push(frame);
    }
    Ok(frames)
}

pub fn load_pose_stream(path: impl AsRef<Path>) -> Result<Vec<RawPoseFrame>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(Error::at(path))?;
    read_pose_stream(file)
}

pub fn write_pose_stream(mut writer: impl Write, frames: &[RawPoseFrame]) -> Result<()> {
    for frame in frames {
        serde_json::to_writer(&mut writer, frame)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
