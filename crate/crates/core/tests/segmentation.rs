use proptest::prelude::*;
use rehab_core::dataset::{extract_windows, resolve_window_label, sampled_indices, Label, NUM_CLASSES};
use rehab_core::media::Y4mReader;
use rehab_core::model::video_paths;
use rehab_core::pose::{KeypointLayout, DEFAULT_CONFIDENCE_FLOOR};
use rehab_core::segment::*;
use rehab_core::synthetic::{write_session, ColourClassifier, SyntheticActor};
use rehab_core::Error;

fn one_hot(start: u64, label: Label) -> WindowPrediction {
    let mut p = vec![0.0; NUM_CLASSES];
    p[label.index()] = 1.0;
    WindowPrediction::from_probabilities(start, p)
}

/// Each window predicted with the label the dataset builder would assign it.
fn oracle_predictions(truth: &[Label]) -> Vec<WindowPrediction> {
    extract_windows(truth.len() as i64)
        .unwrap()
        .into_iter()
        .map(|s| {
            let frames: Vec<Label> = sampled_indices(s).iter().map(|&i| truth[i as usize]).collect();
            one_hot(s, resolve_window_label(&frames).unwrap())
        })
        .collect()
}

fn timeline(runs: &[(u64, Label)]) -> Vec<Label> {
    runs.iter().flat_map(|&(n, l)| std::iter::repeat_n(l, n as usize)).collect()
}

// Window labels only resolve a boundary exactly when it sits on the right phase of
// the 21-frame window grid: onsets at 18 (mod 21), offsets at 20 (mod 21).
const N: Label = Label::NO_ACTION;
const GRID_ALIGNED: [(u64, Label); 6] = [(60, N), (129, Label(3)), (60, N), (150, Label(9)), (105, Label(12)), (84, N)];

#[test]
fn zero_noise_predictions_recover_ground_truth() {
    let truth = timeline(&GRID_ALIGNED);
    let segs = segment_video("v", &oracle_predictions(&truth), truth.len() as u64, &SegmentParams::default());
    let got: Vec<(u64, u64, Label)> = segs.iter().map(|s| (s.start_frame, s.end_frame, s.label)).collect();
    assert_eq!(got, [(60, 188, Label(3)), (249, 398, Label(9)), (399, 503, Label(12))]);
    assert!(segs.iter().all(|s| !s.flagged_for_review && s.mean_confidence == 1.0));
}

fn arb_predictions() -> impl Strategy<Value = (Vec<WindowPrediction>, u64)> {
    (3usize..30).prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![Just(0u8), 1u8..4], n).prop_map(move |labels| {
            let preds: Vec<WindowPrediction> = labels.iter().enumerate().map(|(i, &l)| one_hot(i as u64 * 21, Label(l))).collect();
            let frames = (n as u64 - 1) * 21 + 60;
            (preds, frames)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segments_are_sorted_disjoint_and_long_enough((preds, frames) in arb_predictions(), min in 20u64..90) {
        let params = SegmentParams { min_segment_frames: min, ..SegmentParams::default() };
        let segs = segment_video("v", &preds, frames, &params);
        for s in &segs {
            prop_assert!(s.len() >= min);
            prop_assert!(s.label.is_action());
            prop_assert!(s.end_frame < frames);
        }
        for w in segs.windows(2) {
            prop_assert!(w[0].end_frame < w[1].start_frame);
        }
    }

    #[test]
    fn resegmenting_is_idempotent((preds, frames) in arb_predictions()) {
        let params = SegmentParams::default();
        let segs = segment_video("v", &preds, frames, &params);
        let relabelled = segments_to_frame_labels(&segs, frames);
        let again: Vec<_> = smooth_and_segment(&relabelled, &params);
        let expected: Vec<_> = segs.iter().map(|s| (s.start_frame, s.end_frame, s.label)).collect();
        prop_assert_eq!(again, expected);
    }
}

#[test]
fn synthetic_video_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [(60, N), (129, Label(6)), (60, N), (150, Label(11)), (84, N)];
    let fx = write_session(dir.path(), "s1", &runs, &SyntheticActor::default()).unwrap();
    let mut video = open_session(&fx.video, &fx.pose, &KeypointLayout::body25(), DEFAULT_CONFIDENCE_FLOOR).unwrap();
    let preds = predict_windows(&mut video, &ColourClassifier::new(16), 4).unwrap();
    assert_eq!(preds.len(), extract_windows(fx.frame_count as i64).unwrap().len());
    let mut segs = segment_video("s1", &preds, fx.frame_count, &SegmentParams::default());
    let got: Vec<(u64, u64, Label)> = segs.iter().map(|s| (s.start_frame, s.end_frame, s.label)).collect();
    let want: Vec<(u64, u64, Label)> = fx.annotation.spans.iter().map(|s| (s.start_frame, s.end_frame, s.label)).collect();
    assert_eq!(got, want);

    extract_subclips(&mut video, &mut segs, dir.path().join("clips")).unwrap();
    let uris: Vec<&str> = segs.iter().map(|s| s.subclip_uri.as_deref().unwrap()).collect();
    assert_eq!(uris.len(), 2);
    assert_ne!(uris[0], uris[1]);
    for s in &segs {
        let r = Y4mReader::open(s.subclip_uri.as_ref().unwrap()).unwrap();
        assert_eq!(r.frame_count() as u64, s.len());
    }
}

#[test]
fn subclip_has_exact_frame_range() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_session(dir.path(), "s2", &[(120, Label(2))], &SyntheticActor::default()).unwrap();
    let mut video = open_session(&fx.video, &fx.pose, &KeypointLayout::body25(), DEFAULT_CONFIDENCE_FLOOR).unwrap();
    let seg = ActionSegment {
        video_id: "s2".into(),
        label: Label(2),
        start_frame: 30,
        end_frame: 89,
        mean_confidence: 1.0,
        flagged_for_review: false,
        subclip_uri: None,
    };
    let mut segs = vec![seg];
    extract_subclips(&mut video, &mut segs, dir.path().join("out")).unwrap();
    let mut r = Y4mReader::open(segs[0].subclip_uri.as_ref().unwrap()).unwrap();
    assert_eq!(r.frame_count(), 60);
    let mut src = Y4mReader::open(&fx.video).unwrap();
    assert_eq!(r.read_rgb(0).unwrap(), src.read_rgb(30).unwrap());

    let mut none: Vec<ActionSegment> = Vec::new();
    extract_subclips(&mut video, &mut none, dir.path().join("empty")).unwrap();
    assert!(!dir.path().join("empty").exists());

    segs[0].end_frame = 500;
    let err = extract_subclips(&mut video, &mut segs, dir.path().join("out")).unwrap_err();
    assert!(matches!(&err, Error::Media(m) if m.contains("segment 0")));
}

#[test]
fn missing_pose_stream_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_session(dir.path(), "s3", &[(60, Label(1))], &SyntheticActor::default()).unwrap();
    std::fs::remove_file(&fx.pose).unwrap();
    let (video, pose) = video_paths(dir.path(), "s3");
    let err = open_session(&video, &pose, &KeypointLayout::body25(), DEFAULT_CONFIDENCE_FLOOR).err().unwrap();
    assert!(matches!(err, Error::Dependency(_)));
}
