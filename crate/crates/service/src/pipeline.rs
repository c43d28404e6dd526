//! Segmentation and report generation for one uploaded session.

use std::path::Path;
use std::sync::Arc;

use rehab_core::model::ClassCatalog;
use rehab_core::pose::{KeypointLayout, DEFAULT_CONFIDENCE_FLOOR};
use rehab_core::report::{generate_report, AssessmentReport, LlmClient, MockLlm, ReportContext, RetryPolicy, SubclipFrames, TemplateSet};
use rehab_core::retrieval::{chunk_corpus, consolidate, Document, HashEmbedder, KnowledgeCache, KnowledgeIndex};
use rehab_core::synthetic::ColourClassifier;
use rehab_core::segment::{extract_subclips, open_session, predict_windows, segment_video, ActionSegment, SegmentParams, WindowClassifier};

/// Everything the worker needs besides the store.
pub struct Pipeline {
    pub classifier: Arc<dyn WindowClassifier + Send + Sync>,
    pub llm: Arc<dyn LlmClient>,
    pub catalog: ClassCatalog,
    pub templates: TemplateSet,
    pub knowledge: KnowledgeCache,
    pub layout: KeypointLayout,
    pub confidence_floor: f64,
    pub segment_params: SegmentParams,
    pub retry: RetryPolicy,
    pub batch_size: usize,
}

impl Pipeline {
    pub fn new(
        classifier: Arc<dyn WindowClassifier + Send + Sync>,
        llm: Arc<dyn LlmClient>,
        catalog: ClassCatalog,
        knowledge: KnowledgeCache,
    ) -> Self {
        Pipeline {
            classifier,
            llm,
            catalog,
            templates: TemplateSet::builtin(),
            knowledge,
            layout: KeypointLayout::body25(),
            confidence_floor: DEFAULT_CONFIDENCE_FLOOR,
            segment_params: SegmentParams::default(),
            retry: RetryPolicy::default(),
            batch_size: 8,
        }
    }

    /// Colour-keyed classifier for synthetic videos and a deterministic mock LLM,
    /// grounded in knowledge built from the class descriptions alone.
    pub fn stub() -> rehab_core::Result<Self> {
        let catalog = ClassCatalog::builtin();
        let knowledge = catalog_knowledge(&catalog)?;
        Ok(Pipeline::new(Arc::new(ColourClassifier::new(16)), Arc::new(MockLlm::default()), catalog, knowledge))
    }

    /// Segments the video and writes one sub-clip per segment under `clip_dir`.
    pub fn segment(&self, session_id: &str, video: &Path, pose: &Path, clip_dir: &Path) -> rehab_core::Result<Vec<ActionSegment>> {
        let mut session = open_session(video, pose, &self.layout, self.confidence_floor)?;
        let predictions = predict_windows(&mut session, self.classifier.as_ref(), self.batch_size)?;
        let mut segments = segment_video(session_id, &predictions, session.frame_count() as u64, &self.segment_params);
        extract_subclips(&mut session, &mut segments, clip_dir)?;
        Ok(segments)
    }

    pub fn report(&self, session_id: &str, segments: &[ActionSegment]) -> rehab_core::Result<AssessmentReport> {
        let ctx = ReportContext {
            templates: &self.templates,
            catalog: &self.catalog,
            knowledge: &self.knowledge,
            client: self.llm.as_ref(),
            retry: self.retry,
        };
        generate_report(&ctx, session_id, segments, &mut SubclipFrames)
    }
}

/// Knowledge cache whose corpus is the class descriptions themselves.
pub fn catalog_knowledge(catalog: &ClassCatalog) -> rehab_core::Result<KnowledgeCache> {
    let docs: Vec<Document> = catalog
        .classes
        .iter()
        .map(|c| Document {
            doc_id: format!("class-{}", c.class_id.0),
            text: format!("{}: {}", c.name, c.description),
            metadata: Default::default(),
        })
        .collect();
    let embedder = HashEmbedder::default();
    let index = KnowledgeIndex::build(&chunk_corpus(&docs, 100)?, &embedder)?;
    consolidate(catalog, &index, &embedder, 3, 400, None)
}
