//! Architecture ablations over the recognition model.

use candle_core::Device;
use serde::{Deserialize, Serialize};

use super::metrics::MetricReport;
use crate::error::Result;
use crate::model::{evaluate, train, AblationVariant, ClassCatalog, Example, ModelConfig, RecognitionModel, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub variant: AblationVariant,
    pub total_parameters: usize,
    pub skeleton_parameters: usize,
    pub fusion_parameters: usize,
    pub history: TrainHistory,
    pub report: MetricReport,
}

/// Trains `variant` of `base` from scratch and evaluates it on `test`.
pub fn run_ablation(
    variant: AblationVariant,
    base: &ModelConfig,
    catalog: &ClassCatalog,
    train_set: &[Example],
    val_set: &[Example],
    test_set: &[Example],
    train_cfg: &TrainConfig,
) -> Result<AblationResult> {
    let cfg = variant.apply(base);
    let model = RecognitionModel::new(&cfg, catalog, &Device::Cpu)?;
    let history = train(&model, train_set, val_set, train_cfg)?;
    let report = evaluate(&model, test_set, train_cfg.batch_size)?;
    let params = model.params();
    Ok(AblationResult {
        variant,
        total_parameters: params.count(""),
        skeleton_parameters: params.count("skeleton."),
        fusion_parameters: params.count("guided."),
        history,
        report,
    })
}

/// Markdown comparison table, one row per variant.
pub fn ablation_table(results: &[AblationResult]) -> String {
    let mut out = String::from("| variant | params | weighted F1 | top-1 | top-3 |\n|---|---|---|---|---|\n");
    for r in results {
        out.push_str(&format!(
            "| {} | {} | {:.4} | {:.4} | {} |\n",
            r.variant.as_str(),
            r.total_parameters,
            r.report.weighted_f1,
            r.report.top1_accuracy,
            r.report.top3_accuracy.map_or("-".into(), |v| format!("{v:.4}"))
        ));
    }
    out
}
