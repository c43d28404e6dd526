use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rehab_core::dataset::{
    build_dataset, load_samples, write_dataset, Label, Split, SplitConfig, TimelineAnnotation, VideoEntry,
    NUM_CLASSES,
};
use rehab_core::eval::{
    ablation_table, likert_summary, load_baseline_samples, run_ablation, run_llm_baseline, select_exemplars, BaselineMode,
    LikertDataset,
};
use rehab_core::media::Y4mReader;
use rehab_core::model::{
    self, load_checkpoint_for, load_examples, save_checkpoint, video_paths, AblationVariant, Device, Example, ModelConfig,
    RecognitionModel, TrainConfig,
};
use rehab_core::pose::DEFAULT_CONFIDENCE_FLOOR;
use rehab_core::report::{RetryPolicy, TemplateSet};
use rehab_core::retrieval::KnowledgeCache;
use rehab_core::synthetic::{write_session, SyntheticActor};
use rehab_service::{catalog_knowledge, Pipeline};

use crate::ops::{classifier, LlmArgs};
use crate::{emit, Common};

const ANNOTATION_SUFFIX: &str = ".annotation.json";

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    sessions: usize,
    /// Exercise runs per session, each followed by a rest.
    #[arg(long, default_value_t = 6)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Session `s` cycles through the 15 exercises from a seed-dependent offset, with
/// 60-frame rests in between and run lengths of 90-210 frames.
fn synth_runs(s: usize, runs: usize, seed: u64) -> Vec<(u64, Label)> {
    let mut out = vec![(60, Label::NO_ACTION)];
    for i in 0..runs {
        let k = (seed as usize).wrapping_mul(7).wrapping_add(s * runs + i);
        let label = Label((k % 15) as u8 + 1);
        let len = 90 + ((k * 37 + s * 11) % 5) as u64 * 30;
        out.push((len, label));
        out.push((60, Label::NO_ACTION));
    }
    out
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut written = Vec::new();
    for s in 0..a.sessions {
        let id = format!("session-{s:03}");
        let actor = SyntheticActor { seed: a.seed.wrapping_add(s as u64), ..SyntheticActor::default() };
        let fx = write_session(&a.out, &id, &synth_runs(s, a.runs, a.seed), &actor)?;
        std::fs::write(a.out.join(format!("{id}{ANNOTATION_SUFFIX}")), serde_json::to_string_pretty(&fx.annotation)?)?;
        written.push(serde_json::json!({ "video_id": id, "frames": fx.frame_count, "spans": fx.annotation.spans.len() }));
    }
    emit(&written, None)
}

#[derive(Args)]
pub struct BuildDatasetArgs {
    /// Directory holding `<id>.y4m`, `<id>.pose.jsonl` and `<id>.annotation.json`.
    #[arg(long)]
    videos: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Split config JSON (`{"kind": "explicit", ...}` or `{"kind": "first_train_rest_shuffled", ...}`).
    #[arg(long, conflicts_with = "train_count")]
    split: Option<PathBuf>,
    /// Videos (in id order) assigned to training; the rest go to val/test.
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn build(a: BuildDatasetArgs) -> Result<()> {
    let mut annotations = HashMap::new();
    let mut videos = Vec::new();
    for entry in std::fs::read_dir(&a.videos).with_context(|| a.videos.display().to_string())? {
        let path = entry?.path();
        let Some(id) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(ANNOTATION_SUFFIX)) else {
            continue;
        };
        let ann = TimelineAnnotation::load(&path)?;
        if ann.video_id != id {
            bail!("{} annotates `{}`", path.display(), ann.video_id);
        }
        let frames = Y4mReader::open(video_paths(&a.videos, id).0)?.frame_count();
        videos.push(VideoEntry { video_id: id.to_string(), frame_count: frames as u64 });
        annotations.insert(id.to_string(), ann);
    }
    if videos.is_empty() {
        bail!("no *{ANNOTATION_SUFFIX} files in {}", a.videos.display());
    }
    videos.sort_by(|x, y| x.video_id.cmp(&y.video_id));
    let split = match (&a.split, a.train_count) {
        (Some(p), _) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        (None, Some(n)) => SplitConfig::FirstTrainRestShuffled { train_count: n, seed: a.seed },
        (None, None) => SplitConfig::FirstTrainRestShuffled { train_count: (videos.len() * 7).div_ceil(10), seed: a.seed },
    };
    let (manifest, samples) = build_dataset(&videos, &annotations, &split)?;
    write_dataset(&a.out, &manifest, &samples)?;
    emit(&manifest.sample_counts, None)
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    Tiny,
    ClipB32,
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Dataset directory written by `build-dataset`.
    #[arg(long)]
    dataset: PathBuf,
    /// Directory with the source videos and pose streams.
    #[arg(long)]
    videos: PathBuf,
}

impl DataArgs {
    fn examples(&self, c: &Common, split: Split, image_size: usize) -> Result<Vec<Example>> {
        let samples = load_samples(&self.dataset, split)?;
        Ok(load_examples(&samples, &self.videos, &c.layout()?, DEFAULT_CONFIDENCE_FLOOR, image_size)?)
    }
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "tiny")]
    preset: Preset,
    /// Full model config JSON; overrides --preset.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn config(&self) -> Result<ModelConfig> {
        let cfg = match &self.model_config {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
            None => match self.preset {
                Preset::Tiny => ModelConfig::tiny(),
                Preset::ClipB32 => ModelConfig::clip_b32(),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            max_steps: self.max_steps,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_parser = parse_variant, default_value = "full")]
    variant: AblationVariant,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_variant(s: &str) -> Result<AblationVariant, String> {
    AblationVariant::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| {
        format!("expected one of {}", AblationVariant::ALL.map(|v| v.as_str()).join(", "))
    })
}

pub fn train(c: &Common, a: TrainArgs) -> Result<()> {
    let cfg = a.variant.apply(&a.model.config()?);
    let train_set = a.data.examples(c, Split::Train, cfg.image_size)?;
    let val_set = a.data.examples(c, Split::Val, cfg.image_size)?;
    tracing::info!(train = train_set.len(), val = val_set.len(), variant = a.variant.as_str(), "training");
    let model = RecognitionModel::new(&cfg, &c.catalog()?, &Device::Cpu)?;
    let history = model::train(&model, &train_set, &val_set, &a.model.train_config())?;
    save_checkpoint(&model, &a.out, Some(&history))?;
    emit(
        &serde_json::json!({
            "checkpoint": a.out,
            "steps": history.step_losses.len(),
            "final_loss": history.step_losses.last(),
            "best_epoch": history.best_epoch,
            "best_val_weighted_f1": history.best_val_weighted_f1,
        }),
        None,
    )
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| "expected train, val or test".into())
}

#[derive(Args)]
pub struct EvalModelArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval_model(c: &Common, a: EvalModelArgs) -> Result<()> {
    let model = load_checkpoint_for(&a.checkpoint, &c.catalog()?, &Device::Cpu)?;
    let examples = a.data.examples(c, a.split, model.config().image_size)?;
    let report = model::evaluate(&model, &examples, a.batch_size)?;
    emit(&report, a.out.as_ref())
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ZeroShot,
    FewShot,
}

#[derive(Args)]
pub struct EvalBaselineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    split: Split,
    /// Seed for picking few-shot exemplars from the training split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    llm: LlmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval_baseline(c: &Common, a: EvalBaselineArgs) -> Result<()> {
    let mode = match a.mode {
        ModeArg::ZeroShot => BaselineMode::ZeroShot,
        ModeArg::FewShot => BaselineMode::FewShot,
    };
    let samples = load_baseline_samples(&load_samples(&a.data.dataset, a.split)?, &a.data.videos)?;
    let exemplars = match mode {
        BaselineMode::FewShot => {
            let picked = select_exemplars(&load_samples(&a.data.dataset, Split::Train)?, a.seed);
            if picked.len() < NUM_CLASSES {
                tracing::warn!(classes = picked.len(), "training split lacks exemplars for some classes");
            }
            load_baseline_samples(&picked, &a.data.videos)?
        }
        BaselineMode::ZeroShot => Vec::new(),
    };
    let client = a.llm.build()?;
    let result = run_llm_baseline(
        mode,
        &samples,
        &exemplars,
        &c.catalog()?,
        &TemplateSet::builtin(),
        client.as_ref(),
        &RetryPolicy::default(),
    )?;
    emit(&result, a.out.as_ref())
}

#[derive(Args)]
pub struct EvalAblationArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Variants to run (default: all four).
    #[arg(long, value_parser = parse_variant, num_args = 1..)]
    variants: Vec<AblationVariant>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval_ablation(c: &Common, a: EvalAblationArgs) -> Result<()> {
    let base = a.model.config()?;
    let train_set = a.data.examples(c, Split::Train, base.image_size)?;
    let val_set = a.data.examples(c, Split::Val, base.image_size)?;
    let test_set = a.data.examples(c, Split::Test, base.image_size)?;
    let catalog = c.catalog()?;
    let variants = if a.variants.is_empty() { AblationVariant::ALL.to_vec() } else { a.variants.clone() };
    let results = variants
        .into_iter()
        .map(|v| {
            tracing::info!(variant = v.as_str(), "ablation");
            run_ablation(v, &base, &catalog, &train_set, &val_set, &test_set, &a.model.train_config())
        })
        .collect::<rehab_core::Result<Vec<_>>>()?;
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&results)?)?;
    }
    print!("{}", ablation_table(&results));
    Ok(())
}

#[derive(Args)]
pub struct EvalReportsArgs {
    /// CSV with columns `model_id,dimension,score` (one rating per row).
    #[arg(long)]
    scores: PathBuf,
    /// `enhanced:plain` model pairs to compare.
    #[arg(long = "pair", required = true)]
    pairs: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Directory for `cells.csv` and `comparisons.csv`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
struct ScoreRow {
    model_id: String,
    dimension: String,
    score: u8,
}

pub fn read_scores(path: &Path) -> Result<Vec<LikertDataset>> {
    let mut grouped: BTreeMap<(String, String), Vec<u8>> = BTreeMap::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let row: ScoreRow = row?;
        grouped.entry((row.model_id, row.dimension)).or_default().push(row.score);
    }
    Ok(grouped.into_iter().map(|((model_id, dimension), scores)| LikertDataset { model_id, dimension, scores }).collect())
}

pub fn eval_reports(a: EvalReportsArgs) -> Result<()> {
    let pairs = a
        .pairs
        .iter()
        .map(|p| match p.split_once(':') {
            Some((e, b)) if !e.is_empty() && !b.is_empty() => Ok((e.to_string(), b.to_string())),
            _ => bail!("pair `{p}` is not `enhanced:plain`"),
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = likert_summary(&read_scores(&a.scores)?, &pairs, a.alpha)?;
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("cells.csv"), summary.cells_csv()?)?;
        std::fs::write(dir.join("comparisons.csv"), summary.comparisons_csv()?)?;
    }
    print!("{}", summary.table());
    Ok(())
}

#[derive(Args)]
pub struct AssessArgs {
    /// Session video (`.y4m`); the pose stream defaults to the sibling `.pose.jsonl`.
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    pose: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Consolidated knowledge cache JSON (defaults to the class descriptions).
    #[arg(long)]
    knowledge: Option<PathBuf>,
    /// Directory for the per-segment sub-clips.
    #[arg(long)]
    clips: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn assess(c: &Common, a: AssessArgs) -> Result<()> {
    let catalog = c.catalog()?;
    let knowledge = match &a.knowledge {
        Some(p) => KnowledgeCache::load(p)?,
        None => catalog_knowledge(&catalog)?,
    };
    let mut pipeline = Pipeline::new(classifier(c, a.checkpoint.as_ref())?, a.llm.build()?, catalog, knowledge);
    pipeline.layout = c.layout()?;
    let pose = a.pose.clone().unwrap_or_else(|| a.video.with_extension("pose.jsonl"));
    let session_id = a.video.file_stem().and_then(|s| s.to_str()).unwrap_or("session").to_string();
    let segments = pipeline.segment(&session_id, &a.video, &pose, &a.clips)?;
    let report = pipeline.report(&session_id, &segments)?;
    emit(&serde_json::json!({ "segments": segments, "report": report }), a.out.as_ref())
}
