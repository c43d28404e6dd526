use serde::{Deserialize, Serialize};

use super::chunks::{FrameSource, VideoChunkFrames};
use super::llm::{send_with_retry, LlmClient, LlmRequest, RetryPolicy, FrameImage};
use super::templates::{TemplateId, TemplateSet};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::model::ClassCatalog;
use crate::retrieval::KnowledgeCache;
use crate::segment::ActionSegment;
use crate::text::tokens;

/// Summary used when a session contains no recognised exercise.
pub const EMPTY_SESSION_SUMMARY: &str =
    "No rehabilitation exercise was detected in this session, so no action was evaluated. Please check the camera framing and record again.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Failed { reason: String },
}

impl Outcome {
    pub fn is_failed(&self) -> bool {
        matches!(self, Outcome::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub segment_id: String,
    pub action_id: Label,
    pub action_name: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub mean_confidence: f32,
    pub flagged_for_review: bool,
    pub outcome: Outcome,
    /// Per-chunk analyses; empty when the sub-clip fit in one request.
    pub chunk_evaluations: Vec<String>,
    pub text: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    /// Requests sent to the provider, retries included.
    pub llm_calls: u32,
    pub failed_calls: u32,
    pub frames_sent: usize,
    pub prompt_tokens: usize,
    pub response_tokens: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub session_id: String,
    pub actions: Vec<ActionReport>,
    pub summary: String,
    pub summary_outcome: Outcome,
    /// Provider model, template version and knowledge-cache version.
    pub model_fingerprint: String,
    pub accounting: Accounting,
}

/// Everything report generation reads besides the segments themselves.
pub struct ReportContext<'a> {
    pub templates: &'a TemplateSet,
    pub catalog: &'a ClassCatalog,
    pub knowledge: &'a KnowledgeCache,
    pub client: &'a dyn LlmClient,
    pub retry: RetryPolicy,
}

impl ReportContext<'_> {
    fn call(&self, template_id: TemplateId, prompt: String, frames: Vec<FrameImage>, acc: &mut Accounting) -> Result<String, String> {
        let request = LlmRequest { template_id, prompt, frames };
        let sent = send_with_retry(self.client, &request, &self.retry);
        acc.llm_calls += sent.attempts;
        acc.frames_sent += request.frames.len() * sent.attempts as usize;
        acc.prompt_tokens += tokens(&request.prompt).count() * sent.attempts as usize;
        acc.latency_ms += sent.latency.as_secs_f64() * 1e3;
        match sent.result {
            Ok(text) => {
                acc.failed_calls += sent.attempts - 1;
                acc.response_tokens += tokens(&text).count();
                Ok(text)
            }
            Err(e) => {
                acc.failed_calls += sent.attempts;
                Err(format!("{template_id} call failed after {} attempt(s): {e}", sent.attempts))
            }
        }
    }

    pub fn model_fingerprint(&self) -> String {
        format!("{}|templates:{}|knowledge:v{}", self.client.profile().model_id, self.templates.version, self.knowledge.version)
    }
}

fn action_report(segment_id: &str, segment: &ActionSegment, name: &str, outcome: Outcome) -> ActionReport {
    ActionReport {
        segment_id: segment_id.to_string(),
        action_id: segment.label,
        action_name: name.to_string(),
        start_frame: segment.start_frame,
        end_frame: segment.end_frame,
        mean_confidence: segment.mean_confidence,
        flagged_for_review: segment.flagged_for_review,
        outcome,
        chunk_evaluations: Vec::new(),
        text: None,
    }
}

/// Evaluates one segment: a single request when its frames fit one chunk, otherwise
/// one request per chunk followed by a synthesis request. Failures are recorded on
/// the returned report rather than propagated.
pub fn evaluate_action(
    ctx: &ReportContext<'_>,
    segment_id: &str,
    segment: &ActionSegment,
    chunks: &[VideoChunkFrames],
    acc: &mut Accounting,
) -> ActionReport {
    let class = ctx.catalog.get(segment.label);
    let name = class.map_or_else(|| format!("class {}", segment.label.0), |c| c.name.clone());
    let fail = |reason: String| action_report(segment_id, segment, &name, Outcome::Failed { reason });
    let Some(class) = class else {
        return fail(format!("no description for class {}", segment.label.0));
    };
    let knowledge = match ctx.knowledge.get(segment.label) {
        Ok(k) => k.concatenated_text.as_str(),
        Err(e) => return fail(e.to_string()),
    };
    if chunks.is_empty() {
        return fail("sub-clip has no frames".into());
    }
    let action_id = segment.label.0.to_string();
    let base = [("action_id", action_id.as_str()), ("action_desc", class.description.as_str())];

    let mut report = action_report(segment_id, segment, &name, Outcome::Completed);
    let rendered = if chunks.len() == 1 {
        ctx.templates
            .render(TemplateId::SingleAction, &[base[0], base[1], ("knowledge", knowledge)])
            .map(|p| (TemplateId::SingleAction, p, chunks[0].frames.clone()))
    } else {
        for chunk in chunks {
            let prompt = match ctx.templates.render(TemplateId::ChunkEvaluation, &base) {
                Ok(p) => p,
                Err(e) => return fail(e.to_string()),
            };
            match ctx.call(TemplateId::ChunkEvaluation, prompt, chunk.frames.clone(), acc) {
                Ok(text) => report.chunk_evaluations.push(text),
                Err(reason) => {
                    report.outcome = Outcome::Failed { reason: format!("chunk {}: {reason}", chunk.chunk_index) };
                    return report;
                }
            }
        }
        let joined = report
            .chunk_evaluations
            .iter()
            .enumerate()
            .map(|(i, e)| format!("### Segment {}\n{e}", i + 1))
            .collect::<Vec<_>>()
            .join("\n\n");
        ctx.templates
            .render(TemplateId::ActionSynthesis, &[base[0], base[1], ("chunk_evaluations", &joined), ("knowledge", knowledge)])
            .map(|p| (TemplateId::ActionSynthesis, p, Vec::new()))
    };
    let (template, prompt, frames) = match rendered {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    match ctx.call(template, prompt, frames, acc) {
        Ok(text) => report.text = Some(text),
        Err(reason) => report.outcome = Outcome::Failed { reason },
    }
    report
}

fn evaluations_block(reports: &[ActionReport]) -> String {
    reports
        .iter()
        .map(|r| {
            let body = match (&r.outcome, &r.text) {
                (Outcome::Completed, Some(t)) => t.clone(),
                (Outcome::Failed { reason }, _) => format!("Evaluation unavailable: {reason}"),
                (Outcome::Completed, None) => "Evaluation unavailable.".to_string(),
            };
            format!("## Action {}: {} (frames {}-{})\n{body}", r.action_id.0, r.action_name, r.start_frame, r.end_frame)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One final request over all per-action reports. When it fails, the summary falls
/// back to the individual evaluations and the outcome records why.
pub fn synthesize_final(ctx: &ReportContext<'_>, reports: &[ActionReport], acc: &mut Accounting) -> Result<(String, Outcome)> {
    if reports.is_empty() {
        return Err(Error::validation("final synthesis needs at least one action report"));
    }
    let all = evaluations_block(reports);
    let prompt = ctx.templates.render(TemplateId::FinalSynthesis, &[("all_evaluations", &all)])?;
    Ok(match ctx.call(TemplateId::FinalSynthesis, prompt, Vec::new(), acc) {
        Ok(summary) => (summary, Outcome::Completed),
        Err(reason) => (format!("Final summary unavailable; individual evaluations follow.\n\n{all}"), Outcome::Failed { reason }),
    })
}

/// Segment ids are `<session>/seg<i>` in segment order.
pub fn segment_id(session_id: &str, index: usize) -> String {
    format!("{session_id}/seg{index:03}")
}

/// Full pipeline for one session: every segment is evaluated (failures flagged,
/// never dropped), then one final synthesis.
pub fn generate_report(
    ctx: &ReportContext<'_>,
    session_id: &str,
    segments: &[ActionSegment],
    frames: &mut dyn FrameSource,
) -> Result<AssessmentReport> {
    let mut acc = Accounting::default();
    let model_fingerprint = ctx.model_fingerprint();
    if segments.is_empty() {
        return Ok(AssessmentReport {
            session_id: session_id.to_string(),
            actions: Vec::new(),
            summary: EMPTY_SESSION_SUMMARY.to_string(),
            summary_outcome: Outcome::Completed,
            model_fingerprint,
            accounting: acc,
        });
    }
    let max_frames = ctx.client.profile().max_frames;
    let mut actions = Vec::with_capacity(segments.len());
    for (i, seg) in segments.iter().enumerate() {
        let id = segment_id(session_id, i);
        let report = match frames.chunks(&id, seg, max_frames) {
            Ok(chunks) => evaluate_action(ctx, &id, seg, &chunks, &mut acc),
            Err(e) => {
                let name = ctx.catalog.get(seg.label).map_or_else(String::new, |c| c.name.clone());
                action_report(&id, seg, &name, Outcome::Failed { reason: e.to_string() })
            }
        };
        if let Outcome::Failed { reason } = &report.outcome {
            tracing::warn!(segment = %id, %reason, "action evaluation failed");
        }
        actions.push(report);
    }
    let (summary, summary_outcome) = synthesize_final(ctx, &actions, &mut acc)?;
    Ok(AssessmentReport { session_id: session_id.to_string(), actions, summary, summary_outcome, model_fingerprint, accounting: acc })
}
