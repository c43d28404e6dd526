//! Background consumer of the persistent job queue.
//!
//! Execution is at-least-once (a crashed worker's lease expires and the job is
//! claimed again), so every step checks the session's stored status first and
//! skips work already committed.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::Utc;
use rehab_core::clinic::SessionStatus;

use crate::blobs::BlobStore;
use crate::db::{Job, JobKind, Store};
use crate::error::ApiError;
use crate::pipeline::Pipeline;

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    /// Sub-clips are written to `<artifacts_dir>/<session_id>/`.
    pub artifacts_dir: PathBuf,
    pub lease: Duration,
    pub max_attempts: u32,
    /// Multiplied by the attempt number.
    pub retry_delay: Duration,
    pub poll_interval: Duration,
}

impl WorkerConfig {
    pub fn new(artifacts_dir: impl Into<PathBuf>) -> Self {
        WorkerConfig {
            artifacts_dir: artifacts_dir.into(),
            lease: Duration::from_secs(30 * 60),
            max_attempts: 3,
            retry_delay: Duration::from_secs(5),
            poll_interval: Duration::from_millis(500),
        }
    }
}

/// Wakes idle workers when a job is queued.
#[derive(Debug, Default)]
pub struct Wake {
    pending: Mutex<bool>,
    cv: Condvar,
}

impl Wake {
    pub fn notify(&self) {
        *self.pending.lock().unwrap_or_else(|p| p.into_inner()) = true;
        self.cv.notify_all();
    }

    fn wait(&self, timeout: Duration) {
        let guard = self.pending.lock().unwrap_or_else(|p| p.into_inner());
        let (mut guard, _) = self.cv.wait_timeout_while(guard, timeout, |p| !*p).unwrap_or_else(|p| p.into_inner());
        *guard = false;
    }
}

enum Failure {
    Retryable(String),
    Permanent(String),
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure::Retryable(e.to_string())
    }
}

impl From<rehab_core::Error> for Failure {
    fn from(e: rehab_core::Error) -> Self {
        use rehab_core::Error::*;
        match e {
            Io(_) | Path { .. } | Llm(_) => Failure::Retryable(e.to_string()),
            other => Failure::Permanent(other.to_string()),
        }
    }
}

pub struct Worker {
    store: Arc<Store>,
    blobs: BlobStore,
    pipeline: Arc<Pipeline>,
    config: WorkerConfig,
    wake: Arc<Wake>,
}

impl Worker {
    pub fn new(store: Arc<Store>, blobs: BlobStore, pipeline: Arc<Pipeline>, config: WorkerConfig, wake: Arc<Wake>) -> Self {
        Worker { store, blobs, pipeline, config, wake }
    }

    /// Claims and runs one job; false when none was ready.
    pub fn run_once(&self) -> Result<bool, ApiError> {
        let Some(job) = self.store.claim_job(Utc::now(), self.config.lease)? else { return Ok(false) };
        let span = tracing::info_span!("job", id = job.job_id, session = %job.session_id, attempt = job.attempts);
        let _guard = span.enter();
        match self.process(&job) {
            Ok(()) => self.store.complete_job(job.job_id)?,
            Err(Failure::Retryable(msg)) if job.attempts < self.config.max_attempts => {
                tracing::warn!(error = %msg, "job failed; will retry");
                let delay = self.config.retry_delay * job.attempts;
                self.store.retry_job(job.job_id, &msg, Utc::now() + chrono::Duration::from_std(delay).unwrap_or_default())?;
            }
            Err(Failure::Retryable(msg) | Failure::Permanent(msg)) => {
                tracing::error!(error = %msg, "job failed permanently");
                self.store.fail_job(job.job_id, &msg)?;
                if let Err(e) = self.store.fail_session(&job.session_id, &msg, Utc::now()) {
                    // A regenerated report failing leaves the reported session as it was.
                    tracing::warn!(error = %e, "session status left unchanged");
                }
            }
        }
        Ok(true)
    }

    /// Runs jobs until none is ready; returns how many ran.
    pub fn run_until_idle(&self) -> Result<usize, ApiError> {
        let mut n = 0;
        while self.run_once()? {
            n += 1;
        }
        Ok(n)
    }

    pub fn spawn(self: Arc<Self>, shutdown: Arc<AtomicBool>) -> JoinHandle<()> {
        std::thread::spawn(move || {
            while !shutdown.load(Ordering::Relaxed) {
                match self.run_once() {
                    Ok(true) => {}
                    Ok(false) => self.wake.wait(self.config.poll_interval),
                    Err(e) => {
                        tracing::error!(error = %e, "worker loop");
                        std::thread::sleep(self.config.poll_interval);
                    }
                }
            }
        })
    }

    fn process(&self, job: &Job) -> Result<(), Failure> {
        let session = self
            .store
            .session(&job.session_id)?
            .ok_or_else(|| Failure::Permanent(format!("session {} vanished", job.session_id)))?;
        match (job.kind, session.status) {
            (_, SessionStatus::Failed) => return Ok(()),
            (JobKind::Process, SessionStatus::Reported) => return Ok(()),
            (JobKind::RegenerateReport, SessionStatus::Uploaded) => {
                return Err(Failure::Permanent("session has not been segmented yet".into()))
            }
            (JobKind::Process, SessionStatus::Uploaded) => {
                let video = self
                    .blobs
                    .path(&session.video_uri)
                    .ok_or_else(|| Failure::Permanent(format!("bad video uri {}", session.video_uri)))?;
                let pose = session
                    .pose_uri
                    .as_deref()
                    .and_then(|u| self.blobs.path(u))
                    .ok_or_else(|| Failure::Permanent("pose stream missing: the upload carried no `pose` part".into()))?;
                let clip_dir = self.config.artifacts_dir.join(&session.session_id);
                let segments = self.pipeline.segment(&session.session_id, &video, &pose, &clip_dir)?;
                self.store.save_segments(&session.session_id, &segments, Utc::now())?;
            }
            _ => {}
        }
        let segments: Vec<_> = self
            .store
            .segments(&session.session_id)?
            .iter()
            .map(|s| s.to_action_segment(&session.session_id))
            .collect();
        let report = self.pipeline.report(&session.session_id, &segments)?;
        let (report_id, version) = self.store.save_report(&session.session_id, &report, Utc::now())?;
        tracing::info!(%report_id, version, "report stored");
        Ok(())
    }
}
