//! Video frames and the `.y4m` container.

mod frame;
mod y4m;

pub use frame::{RgbFrame, CLIP_MEAN, CLIP_STD};
pub use y4m::{copy_frame_range, Chroma, Y4mHeader, Y4mReader, Y4mWriter};
