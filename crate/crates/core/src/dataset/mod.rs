//! Windowed training samples from timeline-annotated session videos.

mod annotation;
mod build;
mod label;
mod windows;

pub use annotation::{Span, TimelineAnnotation};
pub use build::{
    build_dataset, load_manifest, load_samples, write_dataset, DatasetManifest, Split, SplitConfig, VideoEntry,
    WindowSample, MANIFEST_VERSION,
};
pub(crate) use label::majority_label;
pub use label::{resolve_window_label, Label, NUM_CLASSES};
pub use windows::{extract_windows, sampled_indices, window_end, FRAMES_PER_WINDOW, SAMPLE_INTERVAL, WINDOW_LEN, WINDOW_STRIDE};
