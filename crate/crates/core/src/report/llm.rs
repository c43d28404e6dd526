use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::templates::TemplateId;
use crate::text::fnv1a;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("request timed out")]
    Timeout,
    #[error("{count} frames exceed the provider limit of {cap}")]
    TooManyFrames { count: usize, cap: usize },
}

impl LlmError {
    /// Transient failures worth retrying: transport errors, timeouts, rate limits and
    /// server-side errors.
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) | LlmError::Timeout => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            LlmError::Malformed(_) | LlmError::TooManyFrames { .. } => false,
        }
    }
}

/// A PNG-encoded video frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameImage {
    pub frame_index: u64,
    pub png: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub template_id: TemplateId,
    pub prompt: String,
    pub frames: Vec<FrameImage>,
}

/// Provider limits and identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub model_id: String,
    /// Largest number of images accepted in one request.
    pub max_frames: usize,
}

pub trait LlmClient: Send + Sync {
    fn profile(&self) -> &ProviderProfile;

    /// Sends one request; callers go through [`send_checked`] so the frame cap is
    /// enforced before anything leaves the process.
    fn send(&self, request: &LlmRequest) -> Result<String, LlmError>;
}

/// Pre-flight frame-cap check, then `send`.
pub fn send_checked(client: &dyn LlmClient, request: &LlmRequest) -> Result<String, LlmError> {
    let cap = client.profile().max_frames;
    if request.frames.len() > cap {
        return Err(LlmError::TooManyFrames { count: request.frames.len(), cap });
    }
    client.send(request)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles for each further retry.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, initial_backoff: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy { max_retries, initial_backoff: Duration::ZERO }
    }

    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff.saturating_mul(1 << retry.min(16))
    }
}

/// Outcome of a request under a retry policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Sent {
    pub result: Result<String, LlmError>,
    pub attempts: u32,
    pub latency: Duration,
}

pub fn send_with_retry(client: &dyn LlmClient, request: &LlmRequest, policy: &RetryPolicy) -> Sent {
    let started = Instant::now();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let result = send_checked(client, request);
        match &result {
            Err(e) if e.is_retryable() && attempts <= policy.max_retries => {
                let wait = policy.backoff(attempts - 1);
                tracing::warn!(template = %request.template_id, attempt = attempts, error = %e, ?wait, "retrying llm call");
                std::thread::sleep(wait);
            }
            _ => return Sent { result, attempts, latency: started.elapsed() },
        }
    }
}

/// Deterministic offline stand-in for a provider: the reply is a pure function of
/// the template, prompt and frames.
#[derive(Debug, Clone)]
pub struct MockLlm {
    profile: ProviderProfile,
    fixed: Option<String>,
}

impl MockLlm {
    pub fn new(max_frames: usize) -> Self {
        MockLlm { profile: ProviderProfile { model_id: "mock-llm".into(), max_frames }, fixed: None }
    }

    /// Always answers `reply`.
    pub fn fixed(reply: impl Into<String>) -> Self {
        MockLlm { fixed: Some(reply.into()), ..MockLlm::new(64) }
    }
}

impl Default for MockLlm {
    fn default() -> Self {
        MockLlm::new(45)
    }
}

impl LlmClient for MockLlm {
    fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn send(&self, request: &LlmRequest) -> Result<String, LlmError> {
        if let Some(reply) = &self.fixed {
            return Ok(reply.clone());
        }
        let mut bytes = request.prompt.as_bytes().to_vec();
        for f in &request.frames {
            bytes.extend(f.frame_index.to_le_bytes());
            bytes.extend(&f.png);
        }
        let digest = format!("{:016x}", fnv1a(&bytes));
        let n = request.frames.len();
        Ok(match request.template_id {
            TemplateId::FinalSynthesis => format!(
                "# Overall Overview\nmock summary {digest}\n# Detailed Breakdown of Individual Actions\nmock breakdown {digest}"
            ),
            TemplateId::ZeroShot | TemplateId::FewShot => format!("{}", fnv1a(&bytes) % 16),
            id => format!("mock {id} over {n} frames ({digest})"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub template_id: TemplateId,
    pub prompt: String,
    pub frame_count: usize,
    pub response: Result<String, String>,
    pub latency_ms: f64,
}

/// Wraps a client and records every call it forwards.
pub struct RecordingClient<C> {
    inner: C,
    log: Mutex<Vec<TranscriptEntry>>,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        RecordingClient { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.log.lock().expect("transcript lock").clone()
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn profile(&self) -> &ProviderProfile {
        self.inner.profile()
    }

    fn send(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let t = Instant::now();
        let result = self.inner.send(request);
        self.log.lock().expect("transcript lock").push(TranscriptEntry {
            template_id: request.template_id,
            prompt: request.prompt.clone(),
            frame_count: request.frames.len(),
            response: result.clone().map_err(|e| e.to_string()),
            latency_ms: t.elapsed().as_secs_f64() * 1e3,
        });
        result
    }
}

/// Endpoint, model and limits of an OpenAI-compatible chat provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_frames: usize,
    pub timeout_secs: u64,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: "http://localhost:8000/v1".into(),
            model: "qwen-vl-max".into(),
            api_key_env: "REHAB_LLM_API_KEY".into(),
            max_frames: 45,
            timeout_secs: 120,
            temperature: None,
            max_tokens: None,
        }
    }
}

impl ProviderConfig {
    /// Applies `REHAB_LLM_ENDPOINT`, `REHAB_LLM_MODEL` and `REHAB_LLM_MAX_FRAMES`.
    pub fn with_env(mut self) -> crate::Result<Self> {
        if let Ok(v) = std::env::var("REHAB_LLM_ENDPOINT") {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var("REHAB_LLM_MODEL") {
            self.model = v;
        }
        if let Ok(v) = std::env::var("REHAB_LLM_MAX_FRAMES") {
            self.max_frames = v.parse().map_err(|_| crate::Error::config(format!("REHAB_LLM_MAX_FRAMES=`{v}` is not a count")))?;
        }
        Ok(self)
    }
}

pub struct OpenAiClient {
    config: ProviderConfig,
    profile: ProviderProfile,
    api_key: Option<String>,
}

impl OpenAiClient {
    pub fn new(config: ProviderConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let profile = ProviderProfile { model_id: config.model.clone(), max_frames: config.max_frames };
        OpenAiClient { config, profile, api_key }
    }

    fn body(&self, request: &LlmRequest) -> Value {
        let mut content = vec![json!({ "type": "text", "text": request.prompt })];
        let b64 = base64::engine::general_purpose::STANDARD;
        content.extend(request.frames.iter().map(|f| {
            json!({ "type": "image_url", "image_url": { "url": format!("data:image/png;base64,{}", b64.encode(&f.png)) } })
        }));
        let mut body = json!({ "model": self.config.model, "messages": [{ "role": "user", "content": content }] });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = self.config.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }
}

impl LlmClient for OpenAiClient {
    fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn send(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let reply = post_json(&url, self.api_key.as_deref(), &self.body(request), Duration::from_secs(self.config.timeout_secs))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Malformed("reply lacks choices[0].message.content".into()))
    }
}

/// POSTs a JSON body and parses a JSON reply; non-2xx statuses become errors.
pub(crate) fn post_json(url: &str, api_key: Option<&str>, body: &Value, timeout: Duration) -> Result<Value, LlmError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.header("Authorization", format!("Bearer {key}"));
    }
    let payload = serde_json::to_vec(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let mut resp = req.send(&payload[..]).map_err(|e| match e {
        ureq::Error::Timeout(_) => LlmError::Timeout,
        other => LlmError::Transport(other.to_string()),
    })?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(|e| LlmError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(LlmError::Status { status, body: text.chars().take(500).collect() });
    }
    serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))
}
