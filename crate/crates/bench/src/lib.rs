//! Fixtures shared by the benchmarks.

use rehab_core::dataset::Label;
use rehab_core::pose::RawPoseFrame;
use rehab_core::retrieval::Document;
use rehab_core::synthetic::SyntheticActor;

/// `frames` poses of one actor cycling through the 15 exercises, 90 frames each.
pub fn pose_stream(frames: u64) -> Vec<RawPoseFrame> {
    let actor = SyntheticActor::default();
    (0..frames).map(|i| actor.pose(Label((i / 90 % 15) as u8 + 1), i)).collect()
}

/// Deterministic filler documents over a 400-word vocabulary.
pub fn corpus(docs: usize, words: usize) -> Vec<Document> {
    (0..docs)
        .map(|d| Document {
            doc_id: format!("doc{d:04}"),
            text: (0..words).map(|w| format!("term{}", (d * 7919 + w * 104_729) % 400)).collect::<Vec<_>>().join(" "),
            metadata: Default::default(),
        })
        .collect()
}
