use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::Utc;
use clap::{Args, ValueEnum};
use rehab_core::model::{load_checkpoint_for, Device};
use rehab_core::report::{LlmClient, MockLlm, OpenAiClient, ProviderConfig};
use rehab_core::segment::WindowClassifier;
use rehab_core::synthetic::ColourClassifier;
use rehab_service::db::JobKind;
use rehab_service::{catalog_knowledge, LogNotifier, Pipeline, Role, Service, ServiceConfig, Store};

use crate::{emit, Common};

#[derive(Args)]
pub struct DbArgs {
    /// Service database (defaults to the `REHAB_DATA_DIR` / `REHAB_DB` location).
    #[arg(long)]
    db: Option<PathBuf>,
}

impl DbArgs {
    fn open(&self) -> Result<Store> {
        let path = match &self.db {
            Some(p) => p.clone(),
            None => ServiceConfig::from_env()?.db_path,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let store = Store::open(&path)?;
        store.migrate()?;
        Ok(store)
    }
}

/// Provider selection shared by `serve`, `assess` and `eval-baseline`.
#[derive(Args, Clone)]
pub struct LlmArgs {
    /// Use the deterministic offline mock instead of a provider.
    #[arg(long)]
    pub mock_llm: bool,
    /// Provider config JSON; `REHAB_LLM_*` variables override it.
    #[arg(long)]
    pub provider: Option<PathBuf>,
}

impl LlmArgs {
    pub fn build(&self) -> Result<Arc<dyn LlmClient>> {
        if self.mock_llm {
            return Ok(Arc::new(MockLlm::default()));
        }
        let base = match &self.provider {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| p.display().to_string())?)?,
            None => ProviderConfig::default(),
        };
        Ok(Arc::new(OpenAiClient::new(base.with_env()?)))
    }
}

/// Window classifier: a trained checkpoint, or the colour stub for synthetic videos.
pub fn classifier(c: &Common, checkpoint: Option<&PathBuf>) -> Result<Arc<dyn WindowClassifier + Send + Sync>> {
    Ok(match checkpoint {
        Some(dir) => Arc::new(load_checkpoint_for(dir, &c.catalog()?, &Device::Cpu)?),
        None => {
            tracing::warn!("no --checkpoint: using the colour-keyed stub classifier");
            Arc::new(ColourClassifier::new(16))
        }
    })
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Data directory; overrides `REHAB_DATA_DIR`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    llm: LlmArgs,
}

pub fn serve(c: &Common, a: ServeArgs) -> Result<()> {
    let mut config = match &a.data_dir {
        Some(d) => ServiceConfig::in_dir(d),
        None => ServiceConfig::from_env()?,
    };
    if let Some(n) = a.workers {
        config.workers = n.max(1);
    }
    if let Some(dir) = config.db_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let store = config.open_store()?;
    let catalog = c.catalog()?;
    let knowledge = match store.latest_knowledge()? {
        Some(k) => k,
        None => {
            tracing::warn!("no consolidated knowledge in the database: grounding reports in class descriptions");
            catalog_knowledge(&catalog)?
        }
    };
    let mut pipeline = Pipeline::new(classifier(c, a.checkpoint.as_ref())?, a.llm.build()?, catalog, knowledge);
    pipeline.layout = c.layout()?;
    let service = Service::new(config, store, Arc::new(pipeline), Arc::new(LogNotifier))?;

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.bind).await.with_context(|| format!("binding {}", a.bind))?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        service.run(listener, shutdown).await?;
        Ok(())
    })
}

pub fn migrate(a: DbArgs) -> Result<()> {
    let store = a.open()?;
    emit(&serde_json::json!({ "schema_version": store.schema_version()? }), None)
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Nurse,
    Patient,
}

#[derive(Args)]
pub struct IssueTokenArgs {
    #[arg(long, value_enum)]
    role: RoleArg,
    /// Nurse id, or the id of an existing patient.
    #[arg(long)]
    subject: String,
    #[command(flatten)]
    db: DbArgs,
}

pub fn issue_token(a: IssueTokenArgs) -> Result<()> {
    let store = a.db.open()?;
    let role = match a.role {
        RoleArg::Nurse => Role::Nurse,
        RoleArg::Patient => Role::Patient,
    };
    if role == Role::Patient && store.patient(&a.subject)?.is_none() {
        bail!("unknown patient `{}`", a.subject);
    }
    let token = store.issue_token(role, &a.subject, Utc::now())?;
    println!("{token}");
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum ReprocessKind {
    /// Regenerate the report from the stored segments (new report version).
    Report,
    /// Rerun the whole pipeline; a no-op for sessions already past a stage.
    Process,
}

#[derive(Args)]
pub struct ReprocessArgs {
    session_id: String,
    #[arg(long, value_enum, default_value = "report")]
    kind: ReprocessKind,
    #[command(flatten)]
    db: DbArgs,
}

pub fn reprocess(a: ReprocessArgs) -> Result<()> {
    let store = a.db.open()?;
    if store.session(&a.session_id)?.is_none() {
        bail!("unknown session `{}`", a.session_id);
    }
    let kind = match a.kind {
        ReprocessKind::Report => JobKind::RegenerateReport,
        ReprocessKind::Process => JobKind::Process,
    };
    let job_id = store.enqueue(&a.session_id, kind, Utc::now())?;
    emit(&serde_json::json!({ "job_id": job_id, "session_id": a.session_id }), None)
}
