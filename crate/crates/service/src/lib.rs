//! Patient/nurse HTTP service: registration, session upload and processing,
//! report delivery, nurse feedback, reminders and adherence analytics.

pub mod api;
pub mod blobs;
pub mod db;
pub mod error;
pub mod pipeline;
pub mod reminders;
pub mod worker;

use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use chrono::Utc;

pub use api::{router, AppState, Clock};
pub use blobs::BlobStore;
pub use db::{Patient, Principal, Role, Store};
pub use error::{ApiError, ApiResult};
pub use pipeline::{catalog_knowledge, Pipeline};
pub use reminders::{run_reminders, LogNotifier, Notifier, ReminderRun};
pub use worker::{Wake, Worker, WorkerConfig};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub db_path: PathBuf,
    pub blob_dir: PathBuf,
    pub worker: WorkerConfig,
    pub workers: usize,
    pub max_upload_bytes: usize,
    pub reminder_interval: Duration,
}

impl ServiceConfig {
    /// Everything under one data directory.
    pub fn in_dir(data_dir: impl Into<PathBuf>) -> Self {
        let dir = data_dir.into();
        ServiceConfig {
            db_path: dir.join("rehab.sqlite"),
            blob_dir: dir.join("blobs"),
            worker: WorkerConfig::new(dir.join("artifacts")),
            workers: 1,
            max_upload_bytes: 512 << 20,
            reminder_interval: Duration::from_secs(60),
        }
    }

    /// `REHAB_DATA_DIR` (default `./rehab-data`), with `REHAB_DB`,
    /// `REHAB_MAX_UPLOAD_BYTES` and `REHAB_WORKERS` overrides.
    pub fn from_env() -> ApiResult<Self> {
        let mut c = Self::in_dir(std::env::var_os("REHAB_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| "rehab-data".into()));
        if let Some(db) = std::env::var_os("REHAB_DB") {
            c.db_path = db.into();
        }
        let num = |name: &str| -> ApiResult<Option<usize>> {
            std::env::var(name)
                .ok()
                .map(|v| v.parse().map_err(|_| ApiError::internal(format!("{name} must be a non-negative integer"))))
                .transpose()
        };
        if let Some(n) = num("REHAB_MAX_UPLOAD_BYTES")? {
            c.max_upload_bytes = n;
        }
        if let Some(n) = num("REHAB_WORKERS")? {
            c.workers = n.max(1);
        }
        Ok(c)
    }

    /// Opens and migrates the database.
    pub fn open_store(&self) -> ApiResult<Arc<Store>> {
        let store = Store::open(&self.db_path)?;
        store.migrate()?;
        Ok(Arc::new(store))
    }
}

/// A wired-up service: HTTP state plus the job worker.
pub struct Service {
    pub config: ServiceConfig,
    pub state: AppState,
    pub worker: Arc<Worker>,
    pub notifier: Arc<dyn Notifier>,
}

impl Service {
    pub fn new(config: ServiceConfig, store: Arc<Store>, pipeline: Arc<Pipeline>, notifier: Arc<dyn Notifier>) -> ApiResult<Self> {
        let blobs = BlobStore::open(&config.blob_dir)?;
        let wake = Arc::new(Wake::default());
        let worker = Arc::new(Worker::new(store.clone(), blobs.clone(), pipeline.clone(), config.worker.clone(), wake.clone()));
        let state = AppState {
            store,
            blobs,
            wake,
            catalog: Arc::new(pipeline.catalog.clone()),
            max_upload_bytes: config.max_upload_bytes,
            clock: Arc::new(Utc::now),
        };
        Ok(Service { config, state, worker, notifier })
    }

    pub fn router(&self) -> Router {
        router(self.state.clone())
    }

    /// Serves HTTP, runs the workers and the reminder loop until `shutdown` resolves.
    pub async fn run(self, listener: tokio::net::TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        let stop = Arc::new(AtomicBool::new(false));
        let threads: Vec<_> = (0..self.config.workers).map(|_| self.worker.clone().spawn(stop.clone())).collect();
        let (store, notifier, clock, every) =
            (self.state.store.clone(), self.notifier.clone(), self.state.clock.clone(), self.config.reminder_interval);
        let reminders = tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                let (store, notifier, now) = (store.clone(), notifier.clone(), clock());
                match tokio::task::spawn_blocking(move || run_reminders(&store, notifier.as_ref(), now)).await {
                    Ok(Ok(run)) if !run.delivered.is_empty() || !run.failed.is_empty() => {
                        tracing::info!(delivered = run.delivered.len(), failed = run.failed.len(), "reminder cycle")
                    }
                    Ok(Err(e)) => tracing::error!(error = %e, "reminder cycle"),
                    _ => {}
                }
            }
        });
        tracing::info!(addr = ?listener.local_addr().ok(), "serving");
        let result = axum::serve(listener, self.router()).with_graceful_shutdown(shutdown).await;
        reminders.abort();
        stop.store(true, Ordering::Relaxed);
        self.state.wake.notify();
        for t in threads {
            let _ = t.join();
        }
        result
    }
}
