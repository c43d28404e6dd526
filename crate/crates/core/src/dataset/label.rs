use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total number of classes: 15 exercises plus "no action".
pub const NUM_CLASSES: usize = 16;

/// Exercise class id. `0` is "no action"; `1..=15` are the exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u8);

impl Label {
    pub const NO_ACTION: Label = Label(0);

    pub fn new(id: u8) -> Result<Self> {
        if (id as usize) < NUM_CLASSES {
            Ok(Label(id))
        } else {
            Err(Error::validation(format!("label {id} outside 0..{NUM_CLASSES}")))
        }
    }

    pub fn is_action(self) -> bool {
        self != Label::NO_ACTION
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn actions() -> impl Iterator<Item = Label> {
        (1..NUM_CLASSES as u8).map(Label)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Picks the winning label among `labels` given per-label vote counts.
///
/// Highest count wins; ties prefer an action over "no action", then the label whose
/// first occurrence in `labels` is earliest. Shared by window labelling and per-frame
/// voting in the segmenter.
pub(crate) fn majority_label(labels: &[Label]) -> Option<Label> {
    let mut counts = [0usize; NUM_CLASSES];
    let mut first_seen = [usize::MAX; NUM_CLASSES];
    for (pos, l) in labels.iter().enumerate() {
        counts[l.index()] += 1;
        first_seen[l.index()] = first_seen[l.index()].min(pos);
    }
    (0..NUM_CLASSES)
        .filter(|&c| counts[c] > 0)
        .min_by_key(|&c| (std::cmp::Reverse(counts[c]), c == 0, first_seen[c]))
        .map(|c| Label(c as u8))
}

/// Overall label for a 10-frame window.
pub fn resolve_window_label(per_frame_labels: &[Label]) -> Result<Label> {
    if per_frame_labels.len() != super::FRAMES_PER_WINDOW {
        return Err(Error::validation(format!(
            "expected {} per-frame labels, got {}",
            super::FRAMES_PER_WINDOW,
            per_frame_labels.len()
        )));
    }
    Ok(majority_label(per_frame_labels).expect("non-empty"))
}
