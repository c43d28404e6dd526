mod knowledge;
mod ml;
mod ops;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rehab_core::model::ClassCatalog;
use rehab_core::pose::KeypointLayout;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "rehab", version, about = "Rehabilitation exercise recognition, segmentation and reporting")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Clone)]
pub struct Common {
    /// Class catalog JSON (defaults to the built-in 16 classes).
    #[arg(long, global = true)]
    pub classes: Option<PathBuf>,
    /// Keypoint layout TOML (defaults to BODY_25).
    #[arg(long, global = true)]
    pub layout: Option<PathBuf>,
}

impl Common {
    pub fn catalog(&self) -> Result<ClassCatalog> {
        Ok(match &self.classes {
            Some(p) => ClassCatalog::load(p)?,
            None => ClassCatalog::builtin(),
        })
    }

    pub fn layout(&self) -> Result<KeypointLayout> {
        Ok(match &self.layout {
            Some(p) => KeypointLayout::load(p)?,
            None => KeypointLayout::body25(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic session videos, pose streams and annotations.
    Synth(ml::SynthArgs),
    /// Window annotated videos into train/val/test samples.
    BuildDataset(ml::BuildDatasetArgs),
    /// Train a recognition model and save a checkpoint.
    Train(ml::TrainArgs),
    /// Score a checkpoint on one dataset split.
    EvalModel(ml::EvalModelArgs),
    /// Zero-/few-shot multimodal LLM classification baseline.
    EvalBaseline(ml::EvalBaselineArgs),
    /// Train and score the architecture variants.
    EvalAblation(ml::EvalAblationArgs),
    /// Summarise nurse Likert ratings and compare model pairs.
    EvalReports(ml::EvalReportsArgs),
    /// Segment one session video and generate its assessment report.
    Assess(ml::AssessArgs),
    /// Chunk and embed a text corpus into a knowledge index.
    BuildIndex(knowledge::BuildIndexArgs),
    /// Retrieve and consolidate per-class knowledge from an index.
    Consolidate(knowledge::ConsolidateArgs),
    /// Run the HTTP service with its background workers.
    Serve(ops::ServeArgs),
    /// Create or upgrade the service database.
    Migrate(ops::DbArgs),
    /// Issue a bearer token for a nurse or patient.
    IssueToken(ops::IssueTokenArgs),
    /// Queue a session for reprocessing.
    EnqueueReprocess(ops::ReprocessArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EmbedderKind {
    /// Offline feature-hashing embedder.
    Hash,
    /// OpenAI-compatible `/embeddings` endpoint.
    Http,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let c = &cli.common;
    match cli.command {
        Command::Synth(a) => ml::synth(a),
        Command::BuildDataset(a) => ml::build(a),
        Command::Train(a) => ml::train(c, a),
        Command::EvalModel(a) => ml::eval_model(c, a),
        Command::EvalBaseline(a) => ml::eval_baseline(c, a),
        Command::EvalAblation(a) => ml::eval_ablation(c, a),
        Command::EvalReports(a) => ml::eval_reports(a),
        Command::Assess(a) => ml::assess(c, a),
        Command::BuildIndex(a) => knowledge::build_index(a),
        Command::Consolidate(a) => knowledge::consolidate(c, a),
        Command::Serve(a) => ops::serve(c, a),
        Command::Migrate(a) => ops::migrate(a),
        Command::IssueToken(a) => ops::issue_token(a),
        Command::EnqueueReprocess(a) => ops::reprocess(a),
    }
}

/// Pretty JSON to stdout, and to `out` when given.
pub fn emit(value: &impl serde::Serialize, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, &text)?;
    }
    println!("{text}");
    Ok(())
}
