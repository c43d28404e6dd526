use std::path::Path;

use serde::{Deserialize, Serialize};

use super::label::Label;
use crate::error::{Error, Result};

/// Inclusive frame span carrying one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: Label,
}

/// Timeline labels for one video, e.g. exported from a timeline annotation tool.
///
/// ```json
/// {"video_id": "v01", "fps": 30.0, "spans": [{"start_frame": 0, "end_frame": 119, "label": 3}]}
/// ```
///
/// Frames outside every span are "no action".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineAnnotation {
    pub video_id: String,
    pub fps: f64,
    pub spans: Vec<Span>,
}

impl TimelineAnnotation {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(Error::validation(format!("{}: fps must be positive", self.video_id)));
        }
        for span in &self.spans {
            Label::new(span.label.0)?;
            if span.start_frame > span.end_frame {
                return Err(Error::validation(format!(
                    "{}: span [{}, {}] ends before it starts",
                    self.video_id, span.start_frame, span.end_frame
                )));
            }
        }
        let bad: Vec<String> = self
            .spans
            .windows(2)
            .filter(|w| w[1].start_frame <= w[0].end_frame)
            .map(|w| {
                format!(
                    "[{}, {}] / [{}, {}]",
                    w[0].start_frame, w[0].end_frame, w[1].start_frame, w[1].end_frame
                )
            })
            .collect();
        if !bad.is_empty() {
            return Err(Error::validation(format!(
                "{}: overlapping or unsorted spans: {}",
                self.video_id,
                bad.join(", ")
            )));
        }
        Ok(())
    }

    /// Label of the span covering `frame`, or "no action".
    pub fn label_at(&self, frame: u64) -> Label {
        let idx = self.spans.partition_point(|s| s.end_frame < frame);
        match self.spans.get(idx) {
            Some(s) if s.start_frame <= frame => s.label,
            _ => Label::NO_ACTION,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::at(path))?;
        let ann: TimelineAnnotation = serde_json::from_str(&text)?;
        ann.validate()?;
        Ok(ann)
    }
}
