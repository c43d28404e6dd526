//! Multimodal-LLM classification baselines (zero- and few-shot).

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_with_misses, MetricReport};
use crate::dataset::{Label, WindowSample, NUM_CLASSES};
use crate::error::Result;
use crate::media::Y4mReader;
use crate::model::{video_paths, ClassCatalog};
use crate::report::{send_with_retry, thin_uniform, FrameImage, LlmClient, LlmRequest, RetryPolicy, TemplateId, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    ZeroShot,
    FewShot,
}

impl BaselineMode {
    fn template(self) -> TemplateId {
        match self {
            BaselineMode::ZeroShot => TemplateId::ZeroShot,
            BaselineMode::FewShot => TemplateId::FewShot,
        }
    }
}

/// A window's sampled frames, PNG-encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSample {
    pub sample_id: String,
    pub label: Label,
    pub frames: Vec<FrameImage>,
}

pub fn load_baseline_samples(samples: &[WindowSample], video_dir: impl AsRef<Path>) -> Result<Vec<BaselineSample>> {
    let mut readers: BTreeMap<&str, Y4mReader> = BTreeMap::new();
    samples
        .iter()
        .map(|s| {
            if !readers.contains_key(s.video_id.as_str()) {
                readers.insert(&s.video_id, Y4mReader::open(video_paths(&video_dir, &s.video_id).0)?);
            }
            let reader = readers.get_mut(s.video_id.as_str()).expect("inserted above");
            let frames = s
                .sampled_frame_indices
                .iter()
                .map(|&i| Ok(FrameImage { frame_index: i, png: reader.read_rgb(i as usize)?.to_png()? }))
                .collect::<Result<Vec<_>>>()?;
            Ok(BaselineSample { sample_id: s.file_name(), label: s.window_label, frames })
        })
        .collect()
}

/// One training window per class, chosen by a seeded shuffle, in label order.
pub fn select_exemplars(train: &[WindowSample], seed: u64) -> Vec<WindowSample> {
    let mut shuffled: Vec<&WindowSample> = train.iter().collect();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut picked: BTreeMap<Label, &WindowSample> = BTreeMap::new();
    for s in shuffled {
        picked.entry(s.window_label).or_insert(s);
    }
    picked.into_values().cloned().collect()
}

/// `"<id>. <name>: <description>"`, one class per line.
pub fn class_list_str(catalog: &ClassCatalog) -> Result<String> {
    Ok(catalog
        .ordered(NUM_CLASSES)?
        .iter()
        .map(|c| format!("{}. {}: {}", c.class_id.0, c.name, c.description))
        .collect::<Vec<_>>()
        .join("\n"))
}

/// First integer token of the reply, e.g. `"Action: 3"` -> 3.
pub fn parse_action_number(reply: &str) -> Option<usize> {
    crate::text::tokens(reply).find_map(|t| if t.bytes().all(|b| b.is_ascii_digit()) { t.parse().ok() } else { None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub sample_id: String,
    pub truth: Label,
    /// `None` when the reply held no valid class number or the call failed.
    pub predicted: Option<usize>,
    pub reply: Result<String, String>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub mode: BaselineMode,
    pub model_id: String,
    /// Top-3 accuracy is absent: the model returns a single answer.
    pub report: MetricReport,
    pub records: Vec<BaselineRecord>,
    pub mean_latency_ms: f64,
    pub unparseable: usize,
}

/// Asks the LLM to classify every sample. In few-shot mode each exemplar's frames
/// precede the sample's; when the total exceeds the provider cap, every video is
/// thinned to an equal share of it.
pub fn run_llm_baseline(
    mode: BaselineMode,
    samples: &[BaselineSample],
    exemplars: &[BaselineSample],
    catalog: &ClassCatalog,
    templates: &TemplateSet,
    client: &dyn LlmClient,
    retry: &RetryPolicy,
) -> Result<BaselineResult> {
    let classes = class_list_str(catalog)?;
    let exemplars = if mode == BaselineMode::FewShot { exemplars } else { &[] };
    let cap = client.profile().max_frames;
    let share = (cap / (exemplars.len() + 1)).max(1);
    let thin = |frames: &[FrameImage]| {
        let total: usize = exemplars.iter().map(|e| e.frames.len()).sum::<usize>() + frames.len();
        if total > cap {
            thin_uniform(frames, share)
        } else {
            frames.to_vec()
        }
    };

    let mut records = Vec::with_capacity(samples.len());
    for sample in samples {
        let mut frames = Vec::new();
        let mut lines = Vec::new();
        for e in exemplars {
            let f = thin(&e.frames);
            lines.push(format!("[images {}-{}] Action: {}", frames.len() + 1, frames.len() + f.len(), e.label.0));
            frames.extend(f);
        }
        let examples = lines.join("\n");
        let prompt = match mode {
            BaselineMode::ZeroShot => templates.render(TemplateId::ZeroShot, &[("class_list_str", &classes)])?,
            BaselineMode::FewShot => {
                templates.render(TemplateId::FewShot, &[("class_list_str", &classes), ("few_shot_examples", &examples)])?
            }
        };
        frames.extend(thin(&sample.frames));
        let sent = send_with_retry(client, &LlmRequest { template_id: mode.template(), prompt, frames }, retry);
        let predicted = sent.result.as_ref().ok().and_then(|r| parse_action_number(r)).filter(|&c| c < NUM_CLASSES);
        if predicted.is_none() {
            tracing::warn!(sample = %sample.sample_id, reply = ?sent.result, "unusable baseline reply");
        }
        records.push(BaselineRecord {
            sample_id: sample.sample_id.clone(),
            truth: sample.label,
            predicted,
            reply: sent.result.map_err(|e| e.to_string()),
            latency_ms: sent.latency.as_secs_f64() * 1e3,
        });
    }
    let truth: Vec<usize> = records.iter().map(|r| r.truth.index()).collect();
    let preds: Vec<Option<usize>> = records.iter().map(|r| r.predicted).collect();
    let report = metrics_with_misses(&truth, &preds, NUM_CLASSES)?;
    let mean_latency_ms = records.iter().map(|r| r.latency_ms).sum::<f64>() / records.len().max(1) as f64;
    Ok(BaselineResult {
        mode,
        model_id: client.profile().model_id.clone(),
        report,
        unparseable: preds.iter().filter(|p| p.is_none()).count(),
        records,
        mean_latency_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenient_parsing() {
        assert_eq!(parse_action_number("3"), Some(3));
        assert_eq!(parse_action_number("Action: 3"), Some(3));
        assert_eq!(parse_action_number("I think 12, maybe 4"), Some(12));
        assert_eq!(parse_action_number("x2 then 7"), Some(7));
        assert_eq!(parse_action_number("no idea"), None);
    }
}
