use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rehab_bench::{corpus, pose_stream};
use rehab_core::dataset::{extract_windows, resolve_window_label, Label};
use rehab_core::eval::{mann_whitney_u, shapiro_wilk};
use rehab_core::pose::{joint_angle, sequence_features, KeypointLayout, ANGLE_EPS, DEFAULT_CONFIDENCE_FLOOR};
use rehab_core::retrieval::{chunk_corpus, Embedder, HashEmbedder, KnowledgeIndex};

fn pose(c: &mut Criterion) {
    c.bench_function("joint_angle", |b| {
        b.iter(|| joint_angle(black_box([1.0, 0.2, 0.0]), black_box([0.0, 0.0, 0.1]), black_box([0.3, 1.0, -0.2]), ANGLE_EPS))
    });
    let layout = KeypointLayout::body25();
    let frames = pose_stream(900);
    c.bench_function("sequence_features/900", |b| {
        b.iter(|| sequence_features(black_box(&frames), &layout, DEFAULT_CONFIDENCE_FLOOR).unwrap())
    });
}

fn windows(c: &mut Criterion) {
    c.bench_function("extract_windows/18000", |b| b.iter(|| extract_windows(black_box(18_000)).unwrap()));
    let labels = [Label(3), Label(3), Label(0), Label(7), Label(7), Label(0), Label(0), Label(3), Label(7), Label(0)];
    c.bench_function("resolve_window_label", |b| b.iter(|| resolve_window_label(black_box(&labels)).unwrap()));
}

fn retrieval(c: &mut Criterion) {
    let embedder = HashEmbedder::new(256);
    let mut group = c.benchmark_group("retrieve_top3");
    for docs in [250usize, 2500] {
        let chunks = chunk_corpus(&corpus(docs, 400), 100).unwrap();
        let index = KnowledgeIndex::build(&chunks, &embedder).unwrap();
        let query = embedder.embed(&["term1 term2 term3 shoulder"]).unwrap().remove(0);
        group.bench_with_input(BenchmarkId::from_parameter(chunks.len()), &index, |b, index| {
            b.iter(|| index.retrieve(black_box(&query), 3).unwrap())
        });
    }
    group.finish();
}

fn statistics(c: &mut Criterion) {
    let a = [7.0, 8.0, 8.0, 9.0, 6.0, 8.0];
    let b = [5.0, 6.0, 7.0, 5.0, 6.0, 4.0];
    c.bench_function("mann_whitney_exact/6v6", |bch| bch.iter(|| mann_whitney_u(black_box(&a), black_box(&b), true).unwrap()));
    let scores: Vec<f64> = (0..40).map(|i| ((i * 37) % 10 + 1) as f64).collect();
    c.bench_function("shapiro_wilk/40", |bch| bch.iter(|| shapiro_wilk(black_box(&scores)).unwrap()));
}

criterion_group!(benches, pose, windows, retrieval, statistics);
criterion_main!(benches);
