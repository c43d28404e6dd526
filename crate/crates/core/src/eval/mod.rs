//! Classification metrics, rank statistics and evaluation drivers.

mod ablation;
mod baseline;
mod likert;
mod metrics;
mod stats;

pub use ablation::{ablation_table, run_ablation, AblationResult};
pub use baseline::{
    class_list_str, load_baseline_samples, parse_action_number, run_llm_baseline, select_exemplars, BaselineMode, BaselineRecord,
    BaselineResult, BaselineSample,
};
pub use likert::{likert_summary, LikertCell, LikertDataset, LikertSummary, PairComparison};
pub use metrics::{argmax, compute_metrics, metrics_from_predictions, metrics_with_misses, rank_of, MetricReport};
pub use stats::{mann_whitney_u, shapiro_wilk, MannWhitney, ShapiroWilk, EXACT_LIMIT};
