use std::sync::OnceLock;

use candle_core::{DType, Device, Tensor, Var, D};
use proptest::prelude::*;
use rehab_core::dataset::Label;
use rehab_core::model::{
    cosine_logits, frame_differences, fuse_streams, AblationVariant, ClassCatalog, ClassDescription, ClipBatch, ModelConfig,
    RecognitionModel,
};

fn model() -> &'static RecognitionModel {
    static MODEL: OnceLock<RecognitionModel> = OnceLock::new();
    MODEL.get_or_init(|| RecognitionModel::new(&ModelConfig::tiny(), &ClassCatalog::builtin(), &Device::Cpu).unwrap())
}

fn randn(shape: &[usize], seed: u64) -> Tensor {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor::from_vec(data, shape, &Device::Cpu).unwrap()
}

fn batch(b: usize, n: usize, seed: u64) -> ClipBatch {
    let s = model().config().image_size;
    ClipBatch::new(randn(&[b, n, 3, s, s], seed), randn(&[b, n, 17], seed + 1)).unwrap()
}

fn vec3(t: &Tensor) -> Vec<Vec<Vec<f32>>> {
    t.to_dtype(DType::F32).unwrap().to_vec3().unwrap()
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
    (a - b).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar::<f32>().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn every_stage_keeps_its_shape_contract(b in 1usize..=4, n in 2usize..=12, seed in 0u64..1000) {
        let m = model();
        let d = m.config().embed_dim;
        let tr = m.forward_trace(&batch(b, n, seed)).unwrap();
        prop_assert_eq!(tr.v_seq.dims(), &[b, n, d]);
        prop_assert_eq!(tr.k_s.as_ref().unwrap().dims(), &[b, n, d]);
        prop_assert_eq!(tr.t_s.dims(), &[b, n, d]);
        prop_assert_eq!(tr.t_m.dims(), &[b, n - 1, d]);
        prop_assert_eq!(tr.v.dims(), &[b, 1, d]);
        prop_assert_eq!(tr.p_m.dims(), &[b, 4, d]);
        prop_assert_eq!(tr.t.dims(), &[b, 16, d]);
        prop_assert_eq!(tr.v_prime.dims(), &[b, 1, d]);
        prop_assert_eq!(tr.t_prime.dims(), &[b, 16, d]);
        prop_assert_eq!(tr.logits.dims(), &[b, 16]);
    }

    #[test]
    fn cosine_logits_ignore_scale_and_temperature_keeps_argmax(
        scale in 0.01f64..100.0, tau in -3.0f64..5.0, seed in 0u64..1000,
    ) {
        let v = randn(&[2, 1, 8], seed);
        let t = randn(&[2, 5, 8], seed + 7);
        let zero = Tensor::new(0f32, &Device::Cpu).unwrap();
        let base = cosine_logits(&v, &t, &zero).unwrap();
        let scaled = cosine_logits(&(&v * scale).unwrap(), &t, &zero).unwrap();
        prop_assert!(max_abs_diff(&base, &scaled) < 1e-5);
        let warm = cosine_logits(&v, &t, &Tensor::new(tau as f32, &Device::Cpu).unwrap()).unwrap();
        prop_assert_eq!(
            base.argmax(D::Minus1).unwrap().to_vec1::<u32>().unwrap(),
            warm.argmax(D::Minus1).unwrap().to_vec1::<u32>().unwrap()
        );
    }
}

#[test]
fn repeated_frames_give_repeated_features_and_batches_are_independent() {
    let m = model();
    let s = m.config().image_size;
    let one = randn(&[1, 1, 3, s, s], 3);
    let rest = randn(&[1, 8, 3, s, s], 4);
    let clip = Tensor::cat(&[&one, &one, &rest], 1).unwrap();
    let v = vec3(&m.encode_frames(&clip).unwrap());
    assert_eq!(v[0][0], v[0][1]);

    let two = Tensor::cat(&[&clip, &clip], 0).unwrap();
    let v2 = vec3(&m.encode_frames(&two).unwrap());
    for (a, b) in v2[0].iter().flatten().zip(v2[1].iter().flatten()) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn skeleton_encoder_is_bidirectional_and_finite_on_zeros() {
    let m = model();
    let x = randn(&[1, 10, 17], 11);
    let rev = x.flip(&[1]).unwrap();
    let a = m.encode_skeleton(&x).unwrap();
    let b = m.encode_skeleton(&rev).unwrap().flip(&[1]).unwrap();
    // A causal (one-directional) encoder run on the reversed clip would not match
    // anyway; a bidirectional one with distinct directions must not be time-symmetric.
    assert!(max_abs_diff(&a, &b) > 1e-4);
    assert_eq!(m.encode_skeleton(&randn(&[4, 10, 17], 1)).unwrap().dims(), &[4, 10, 32]);
    let z = m.encode_skeleton(&Tensor::zeros((2, 10, 17), DType::F32, &Device::Cpu).unwrap()).unwrap();
    assert!(z.flatten_all().unwrap().to_vec1::<f32>().unwrap().iter().all(|v| v.is_finite()));
    assert!(m.encode_skeleton(&randn(&[1, 10, 16], 1)).is_err());
}

#[test]
fn guided_fusion_is_batch_equivariant_and_differentiable() {
    let m = model();
    let v = Var::from_tensor(&randn(&[3, 10, 32], 21)).unwrap();
    let k = Var::from_tensor(&randn(&[3, 10, 32], 22)).unwrap();
    let out = m.guided_spatial_fuse(v.as_tensor(), k.as_tensor()).unwrap();

    let perm = Tensor::new(&[2u32, 0, 1], &Device::Cpu).unwrap();
    let permuted = m
        .guided_spatial_fuse(&v.as_tensor().index_select(&perm, 0).unwrap(), &k.as_tensor().index_select(&perm, 0).unwrap())
        .unwrap();
    assert!(max_abs_diff(&permuted, &out.index_select(&perm, 0).unwrap()) < 1e-5);

    let grads = out.sqr().unwrap().sum_all().unwrap().backward().unwrap();
    for var in [&v, &k] {
        let g = grads.get(var.as_tensor()).unwrap().sqr().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap();
        assert!(g > 0.0);
    }
    assert!(m.guided_spatial_fuse(&randn(&[1, 10, 32], 1), &randn(&[1, 9, 32], 2)).is_err());
}

#[test]
fn motion_stream_uses_consecutive_differences() {
    let m = model();
    let v = randn(&[2, 10, 32], 5);
    assert_eq!(m.motion_encode(&v).unwrap().dims(), &[2, 9, 32]);

    let constant = randn(&[2, 1, 32], 6).broadcast_as((2, 10, 32)).unwrap().contiguous().unwrap();
    assert_eq!(frame_differences(&constant).unwrap().abs().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap(), 0.0);

    let shifted = v.broadcast_add(&randn(&[1, 1, 32], 8)).unwrap();
    assert!(max_abs_diff(&frame_differences(&v).unwrap(), &frame_differences(&shifted).unwrap()) < 1e-5);
    assert!(m.motion_encode(&randn(&[1, 1, 32], 1)).is_err());
}

#[test]
fn stream_fusion_is_sum_of_time_means() {
    let c1 = randn(&[2, 1, 32], 1);
    let c2 = randn(&[2, 1, 32], 2);
    let t_s = c1.broadcast_as((2, 10, 32)).unwrap().contiguous().unwrap();
    let t_m = c2.broadcast_as((2, 9, 32)).unwrap().contiguous().unwrap();
    let v = fuse_streams(&t_s, &t_m).unwrap();
    assert_eq!(v.dims(), &[2, 1, 32]);
    assert!(max_abs_diff(&v, &(&c1 + &c2).unwrap()) < 1e-6);

    let zeros = Tensor::zeros((2, 9, 32), DType::F32, &Device::Cpu).unwrap();
    let only_s = fuse_streams(&randn(&[2, 10, 32], 3), &zeros).unwrap();
    assert!(max_abs_diff(&only_s, &randn(&[2, 10, 32], 3).mean_keepdim(1).unwrap()) < 1e-6);
    assert!(fuse_streams(&randn(&[2, 10, 32], 3), &randn(&[2, 9, 16], 3)).is_err());
}

#[test]
fn motion_prompt_is_deterministic_and_receives_gradient() {
    let m = model();
    let t_m = randn(&[1, 9, 32], 9);
    let two = Tensor::cat(&[&t_m, &t_m], 0).unwrap();
    let p = m.motion_prompt(&two).unwrap();
    assert_eq!(p.dims(), &[2, 4, 32]);
    assert_eq!(max_abs_diff(&p.get(0).unwrap(), &p.get(1).unwrap()), 0.0);

    let b = batch(2, 10, 30);
    let logits = m.forward(&b).unwrap();
    let loss = rehab_core::model::cross_entropy(&logits, &Tensor::new(&[3u32, 7], &Device::Cpu).unwrap()).unwrap();
    let grads = loss.backward().unwrap();
    let w = m.params().var("adapter.mlp.fc1.weight").unwrap();
    let g = grads.get(w.as_tensor()).unwrap().sqr().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap();
    assert!(g > 0.0);
    // Frozen vision encoder receives nothing.
    assert!(grads.get(m.params().var("vision.proj.weight").unwrap().as_tensor()).is_none());
}

#[test]
fn class_texts_follow_descriptions_and_prompt() {
    let mut catalog = ClassCatalog::builtin();
    catalog.classes[2] = ClassDescription { description: catalog.classes[1].description.clone(), ..catalog.classes[2].clone() };
    let m = RecognitionModel::new(&ModelConfig::tiny(), &catalog, &Device::Cpu).unwrap();
    let p = randn(&[2, 4, 32], 40);
    let t = vec3(&m.encode_class_texts(&p).unwrap());
    assert_eq!(t[0].len(), 16);
    for (a, b) in t[0][1].iter().zip(&t[0][2]) {
        assert!((a - b).abs() < 1e-5);
    }
    let diff: f32 = t[0][5].iter().zip(&t[1][5]).map(|(a, b)| (a - b).abs()).sum();
    assert!(diff > 1e-3);
}

#[test]
fn overlong_description_names_the_class() {
    let mut catalog = ClassCatalog::builtin();
    catalog.classes[9].description = "lift ".repeat(200);
    let err = RecognitionModel::new(&ModelConfig::tiny(), &catalog, &Device::Cpu).err().unwrap().to_string();
    assert!(err.contains("class 9"), "{err}");
}

#[test]
fn missing_description_is_a_config_error() {
    let mut catalog = ClassCatalog::builtin();
    catalog.classes.retain(|c| c.class_id != Label(12));
    let err = RecognitionModel::new(&ModelConfig::tiny(), &catalog, &Device::Cpu).err().unwrap();
    assert!(matches!(err, rehab_core::Error::Config(_)), "{err}");
}

#[test]
fn cross_modal_branches_run_in_parallel() {
    let m = model();
    let v = randn(&[2, 1, 32], 50);
    let t = randn(&[2, 16, 32], 51);
    let (v1, t1) = m.cross_modal_enhance(&v, &t).unwrap();
    assert_eq!((v1.dims(), t1.dims()), (v.dims(), t.dims()));
    for row in vec3(&t1).iter().flatten().chain(vec3(&v1).iter().flatten()) {
        let mean = row.iter().sum::<f32>() / row.len() as f32;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f32>() / row.len() as f32;
        assert!(mean.abs() < 1e-4 && (var - 1.0).abs() < 1e-2);
    }
    // A chained variant would attend from V into the already-enhanced T'.
    let (v_chained, _) = m.cross_modal_enhance(&v, &t1).unwrap();
    assert!(max_abs_diff(&v1, &v_chained) > 1e-4);
}

#[test]
fn classify_cases() {
    let dev = Device::Cpu;
    let v = Tensor::new(&[[[1f32, 2.0, 3.0]]], &dev).unwrap();
    let t = Tensor::new(&[[[2f32, 4.0, 6.0], [-3.0, 0.0, 1.0]]], &dev).unwrap();
    let tau = Tensor::new(2f32, &dev).unwrap();
    let l = cosine_logits(&v, &t, &tau).unwrap().to_vec2::<f32>().unwrap();
    assert!((l[0][0] - 2f32.exp()).abs() < 1e-4);
    assert!(l[0][1].abs() < 1e-6);
    let zero = Tensor::zeros((1, 1, 3), DType::F32, &dev).unwrap();
    let z = cosine_logits(&zero, &t, &tau).unwrap().to_vec2::<f32>().unwrap();
    assert!(z[0].iter().all(|v| v.is_finite()));
}

#[test]
fn classify_gradient_matches_finite_differences() {
    let dev = Device::Cpu;
    let v0: Vec<f64> = vec![0.3, -1.2, 0.8, 0.5];
    let t = Tensor::new(&[[[1.0f64, 0.2, -0.4, 0.9], [-0.7, 0.5, 1.1, 0.0], [0.1, -0.3, 0.2, -1.0]]], &dev).unwrap();
    let tau = Tensor::new(0.7f64, &dev).unwrap();
    let w = [0.5f64, -1.0, 2.0];
    let objective = |v: &Tensor| -> Tensor {
        cosine_logits(v, &t, &tau).unwrap().broadcast_mul(&Tensor::new(&[w], &dev).unwrap()).unwrap().sum_all().unwrap()
    };
    let var = Var::new(v0.clone(), &dev).unwrap();
    let grads = objective(&var.as_tensor().reshape((1, 1, 4)).unwrap()).backward().unwrap();
    let analytic = grads.get(var.as_tensor()).unwrap().to_vec1::<f64>().unwrap();
    let h = 1e-4;
    for k in 0..4 {
        let eval = |delta: f64| {
            let mut v = v0.clone();
            v[k] += delta;
            objective(&Tensor::from_vec(v, (1, 1, 4), &dev).unwrap()).to_scalar::<f64>().unwrap()
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        let rel = (analytic[k] - numeric).abs() / numeric.abs().max(1e-8);
        assert!(rel < 1e-3, "coordinate {k}: {} vs {numeric}", analytic[k]);
    }
}

#[test]
fn forward_is_finite_and_normalisable_even_on_zeros() {
    let m = model();
    let logits = m.forward(&batch(2, 10, 60)).unwrap();
    assert_eq!(logits.dims(), &[2, 16]);
    for row in rehab_core::model::softmax_rows(&logits).unwrap() {
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
    let s = m.config().image_size;
    let zeros = ClipBatch::new(
        Tensor::zeros((1, 10, 3, s, s), DType::F32, &Device::Cpu).unwrap(),
        Tensor::zeros((1, 10, 17), DType::F32, &Device::Cpu).unwrap(),
    )
    .unwrap();
    let z = m.forward(&zeros).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
    assert!(z.iter().all(|v| v.is_finite()));
}

#[test]
fn ablation_variants_differ_by_documented_parameter_counts() {
    let base = ModelConfig::tiny();
    let (d, h, f) = (base.embed_dim, base.skeleton_hidden, 17);
    let build = |v: AblationVariant| RecognitionModel::new(&v.apply(&base), &ClassCatalog::builtin(), &Device::Cpu).unwrap();
    let full = build(AblationVariant::Full);
    let none = build(AblationVariant::NoSkeleton);
    let mlp_enc = build(AblationVariant::MlpSkeletonEncoder);
    let mlp_fuse = build(AblationVariant::MlpGuidedFuse);

    let lstm = 2 * (4 * h * f + 4 * h + 4 * h * h) + (2 * h * d + d);
    let mlp = (f * 2 * h + 2 * h) + (2 * h * d + d);
    assert_eq!(full.params().count("skeleton."), lstm);
    assert_eq!(mlp_enc.params().count("skeleton."), mlp);
    assert_eq!(none.params().count("skeleton.") + none.params().count("guided."), 0);
    let concat = (2 * d * 4 * d + 4 * d) + (4 * d * d + d);
    assert_eq!(mlp_fuse.params().count("guided."), concat);

    let shared = |m: &RecognitionModel| m.params().count("") - m.params().count("skeleton.") - m.params().count("guided.");
    assert_eq!(shared(&full), shared(&none));
    assert_eq!(shared(&full), shared(&mlp_enc));
    assert_eq!(shared(&full), shared(&mlp_fuse));
    assert!(none.forward_trace(&batch(1, 10, 1)).unwrap().k_s.is_none());
}
