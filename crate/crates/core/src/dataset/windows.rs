use crate::error::{Error, Result};

/// Frames spanned by one window.
pub const WINDOW_LEN: u64 = 60;
/// Offset between consecutive window starts.
pub const WINDOW_STRIDE: u64 = 21;
/// Sampling interval inside a window.
pub const SAMPLE_INTERVAL: u64 = 6;
/// Sampled frames per window.
pub const FRAMES_PER_WINDOW: usize = 10;

/// Start frames of every full window that fits in a video of `frame_count` frames.
pub fn extract_windows(frame_count: i64) -> Result<Vec<u64>> {
    if frame_count < 0 {
        return Err(Error::validation(format!("negative frame count {frame_count}")));
    }
    let frame_count = frame_count as u64;
    if frame_count < WINDOW_LEN {
        return Ok(Vec::new());
    }
    Ok((0..=frame_count - WINDOW_LEN).step_by(WINDOW_STRIDE as usize).collect())
}

/// The 10 frame indices sampled from the window starting at `start`.
pub fn sampled_indices(start: u64) -> [u64; FRAMES_PER_WINDOW] {
    std::array::from_fn(|k| start + k as u64 * SAMPLE_INTERVAL)
}

/// Last frame covered by the window starting at `start`.
pub fn window_end(start: u64) -> u64 {
    start + WINDOW_LEN - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_counts() {
        assert!(extract_windows(0).unwrap().is_empty());
        assert!(extract_windows(59).unwrap().is_empty());
        assert_eq!(extract_windows(60).unwrap(), vec![0]);
        assert_eq!(extract_windows(150).unwrap(), vec![0, 21, 42, 63, 84]);
    }

    #[test]
    fn negative_count_is_error() {
        assert!(extract_windows(-1).is_err());
    }

    #[test]
    fn sampled_frames_step_by_six() {
        let idx = sampled_indices(21);
        assert_eq!(idx[0], 21);
        assert_eq!(idx[9], 21 + 54);
        assert!(idx.windows(2).all(|w| w[1] - w[0] == 6));
        assert!(idx[9] <= window_end(21));
    }
}
