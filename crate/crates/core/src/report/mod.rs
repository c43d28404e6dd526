//! Knowledge-grounded assessment reports: sub-clips are sampled at 1 fps in 45 s
//! chunks, evaluated per action by a multimodal LLM, then merged into one summary.

mod chunks;
mod generate;
mod llm;
mod templates;

pub use chunks::{chunk_plan, thin_uniform, FrameSource, SubclipFrames, VideoChunkFrames, CHUNK_SECONDS};
pub use generate::{
    evaluate_action, generate_report, segment_id, synthesize_final, Accounting, ActionReport, AssessmentReport, Outcome,
    ReportContext, EMPTY_SESSION_SUMMARY,
};
pub(crate) use llm::post_json;
pub use llm::{
    send_checked, send_with_retry, FrameImage, LlmClient, LlmError, LlmRequest, MockLlm, OpenAiClient, ProviderConfig,
    ProviderProfile, RecordingClient, RetryPolicy, Sent, TranscriptEntry,
};
pub use templates::{has_unresolved_placeholder, PromptTemplate, TemplateId, TemplateSet, TEMPLATE_VERSION};
