//! HTTP routes. Every route requires a bearer token; nurses see everything,
//! patients only their own records.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, FromRequestParts, Multipart, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Days, NaiveDate, Utc};
use rehab_core::clinic::{adherence_stats, enrolled_days, offset_from_seconds, LikertScores, PatientActivity};
use rehab_core::dataset::Label;
use rehab_core::model::ClassCatalog;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::blobs::BlobStore;
use crate::db::{Patient, Principal, Role, SessionRecord, StatusEvent, Store};
use crate::error::{ApiError, ApiResult};
use crate::worker::Wake;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub blobs: BlobStore,
    pub wake: Arc<Wake>,
    pub catalog: Arc<ClassCatalog>,
    pub max_upload_bytes: usize,
    pub clock: Clock,
}

impl AppState {
    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }
}

pub fn router(state: AppState) -> Router {
    let upload_limit = state.max_upload_bytes.saturating_mul(2).saturating_add(1 << 20);
    Router::new()
        .route("/patients", post(create_patient).get(list_patients))
        .route("/patients/{id}/sessions", get(patient_sessions))
        .route("/patients/{id}/reminder-optin", post(reminder_opt_in))
        .route("/sessions", post(upload_session).layer(DefaultBodyLimit::max(upload_limit)))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/segments/{index}/clip", get(segment_clip))
        .route("/reports/{id}", get(get_report))
        .route("/reports/{id}/feedback", post(submit_feedback))
        .route("/analytics/adherence", get(adherence))
        .fallback(|| async { ApiError::not_found("no_route", "no such endpoint") })
        .with_state(state)
}

impl FromRequestParts<AppState> for Principal {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(ApiError::unauthorized)?;
        state.store.principal(token)?.ok_or_else(ApiError::unauthorized)
    }
}

impl Principal {
    fn require_nurse(&self) -> ApiResult<()> {
        match self.role {
            Role::Nurse => Ok(()),
            Role::Patient => Err(ApiError::forbidden("nurse role required")),
        }
    }

    fn require_access(&self, patient_id: &str) -> ApiResult<()> {
        match self.role {
            Role::Nurse => Ok(()),
            Role::Patient if self.subject == patient_id => Ok(()),
            Role::Patient => Err(ApiError::forbidden("patients may only access their own records")),
        }
    }
}

fn parse_json<T: DeserializeOwned>(body: &Bytes, code: &'static str) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string()))
}

fn load_patient(state: &AppState, id: &str) -> ApiResult<Patient> {
    state.store.patient(id)?.ok_or_else(|| ApiError::not_found("patient_not_found", format!("no patient {id}")))
}

fn load_session(state: &AppState, who: &Principal, id: &str) -> ApiResult<SessionRecord> {
    let s = state.store.session(id)?.ok_or_else(|| ApiError::not_found("session_not_found", format!("no session {id}")))?;
    who.require_access(&s.patient_id)?;
    Ok(s)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

// --- patients ---

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreatePatient {
    patient_id: String,
    enrollment_date: NaiveDate,
    exercise_plan_id: String,
    #[serde(default)]
    reminder_opt_in: bool,
    #[serde(default)]
    utc_offset_minutes: i32,
}

async fn create_patient(State(state): State<AppState>, who: Principal, body: Bytes) -> ApiResult<Response> {
    who.require_nurse()?;
    let req: CreatePatient = parse_json(&body, "invalid_body")?;
    if !valid_id(&req.patient_id) {
        return Err(ApiError::bad_request("patient_id must be 1-64 characters of [A-Za-z0-9_-]"));
    }
    let offset = offset_from_seconds(req.utc_offset_minutes.saturating_mul(60))
        .map_err(|_| ApiError::bad_request("utc_offset_minutes out of range"))?;
    let today = state.now().with_timezone(&offset).date_naive();
    if req.enrollment_date > today {
        return Err(ApiError::bad_request(format!("enrollment_date {} is in the future", req.enrollment_date)));
    }
    let patient = Patient {
        patient_id: req.patient_id,
        enrollment_date: req.enrollment_date,
        exercise_plan_id: req.exercise_plan_id,
        reminder_opt_in: req.reminder_opt_in,
        utc_offset_minutes: req.utc_offset_minutes,
    };
    let now = state.now();
    state.store.create_patient(&patient, now)?;
    let token = state.store.issue_token(Role::Patient, &patient.patient_id, now)?;
    Ok((StatusCode::CREATED, Json(json!({ "patient": patient, "token": token }))).into_response())
}

#[derive(Deserialize)]
struct Page {
    #[serde(default = "default_limit")]
    limit: u32,
    #[serde(default)]
    offset: u32,
}

fn default_limit() -> u32 {
    50
}

#[derive(Serialize)]
struct PatientSummary {
    #[serde(flatten)]
    patient: Patient,
    sessions: u32,
    enrolled_days: u32,
    /// Sessions per enrolled day so far; absent on the enrolment day itself.
    frequency: Option<f64>,
}

async fn list_patients(State(state): State<AppState>, who: Principal, Query(page): Query<Page>) -> ApiResult<Json<serde_json::Value>> {
    who.require_nurse()?;
    let limit = page.limit.clamp(1, 500);
    let patients = state.store.patients(limit, page.offset)?;
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for (pid, _) in state.store.session_times()? {
        *counts.entry(pid).or_default() += 1;
    }
    let today = state.now().date_naive();
    let rows: Vec<PatientSummary> = patients
        .into_iter()
        .map(|p| {
            let days = enrolled_days(p.enrollment_date, p.enrollment_date, today + Days::new(1));
            let sessions = counts.get(&p.patient_id).copied().unwrap_or(0);
            PatientSummary { frequency: (days > 0).then(|| sessions as f64 / days as f64), sessions, enrolled_days: days, patient: p }
        })
        .collect();
    Ok(Json(json!({ "patients": rows, "limit": limit, "offset": page.offset })))
}

async fn patient_sessions(State(state): State<AppState>, who: Principal, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    who.require_access(&id)?;
    load_patient(&state, &id)?;
    let sessions = state.store.patient_sessions(&id)?;
    Ok(Json(json!({ "patient_id": id, "sessions": sessions })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OptIn {
    opt_in: bool,
    utc_offset_minutes: Option<i32>,
}

async fn reminder_opt_in(State(state): State<AppState>, who: Principal, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Patient>> {
    who.require_access(&id)?;
    let req: OptIn = parse_json(&body, "invalid_body")?;
    if let Some(m) = req.utc_offset_minutes {
        offset_from_seconds(m.saturating_mul(60)).map_err(|_| ApiError::bad_request("utc_offset_minutes out of range"))?;
    }
    Ok(Json(state.store.set_reminder_opt_in(&id, req.opt_in, req.utc_offset_minutes)?))
}

// --- sessions ---

const Y4M_MAGIC: &[u8] = b"YUV4MPEG2 ";

async fn read_field(mut field: axum::extract::multipart::Field<'_>, limit: usize) -> ApiResult<Vec<u8>> {
    let mut out = Vec::new();
    while let Some(chunk) = field.chunk().await.map_err(multipart_error)? {
        if out.len() + chunk.len() > limit {
            return Err(too_large(limit));
        }
        out.extend_from_slice(&chunk);
    }
    Ok(out)
}

fn too_large(limit: usize) -> ApiError {
    ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", format!("upload exceeds {limit} bytes"))
        .with_detail(json!({ "limit_bytes": limit }))
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", e.body_text())
    } else {
        ApiError::bad_request(format!("malformed multipart body: {}", e.body_text()))
    }
}

/// Multipart parts: `video` (y4m, required), `pose` (JSON-lines keypoints), and
/// `patient_id` (required for nurses, defaults to the caller for patients).
async fn upload_session(State(state): State<AppState>, who: Principal, headers: HeaderMap, mut form: Multipart) -> ApiResult<Response> {
    let limit = state.max_upload_bytes;
    let (mut patient_id, mut video, mut pose) = (None, None, None);
    while let Some(field) = form.next_field().await.map_err(multipart_error)? {
        match field.name().unwrap_or_default() {
            "patient_id" => patient_id = Some(String::from_utf8_lossy(&read_field(field, 256).await?).trim().to_string()),
            "video" => video = Some(read_field(field, limit).await?),
            "pose" => pose = Some(read_field(field, limit).await?),
            other => return Err(ApiError::bad_request(format!("unexpected part `{other}`"))),
        }
    }
    let patient_id = match (who.role, patient_id) {
        (_, Some(p)) => p,
        (Role::Patient, None) => who.subject.clone(),
        (Role::Nurse, None) => return Err(ApiError::bad_request("missing `patient_id` part")),
    };
    who.require_access(&patient_id)?;
    load_patient(&state, &patient_id)?;
    let video = video.ok_or_else(|| ApiError::bad_request("missing `video` part"))?;
    if video.is_empty() {
        return Err(ApiError::bad_request("video is empty"));
    }
    if !video.starts_with(Y4M_MAGIC) {
        return Err(ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_media", "video must be a YUV4MPEG2 stream"));
    }
    let key = headers.get("idempotency-key").and_then(|v| v.to_str().ok()).map(str::trim).filter(|k| !k.is_empty());
    let video_uri = state.blobs.put(&video)?;
    let pose_uri = pose.filter(|p| !p.is_empty()).map(|p| state.blobs.put(&p)).transpose()?;
    let (session, created) = state.store.create_session(&patient_id, &video_uri, pose_uri.as_deref(), key, state.now())?;
    if created {
        state.wake.notify();
    }
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!({ "session_id": session.session_id, "status": session.status, "created": created }))).into_response())
}

#[derive(Serialize)]
struct SegmentView {
    index: u32,
    label: u8,
    action_name: Option<String>,
    start_frame: u64,
    end_frame: u64,
    mean_confidence: f32,
    flagged_for_review: bool,
    clip_url: Option<String>,
}

#[derive(Serialize)]
struct SessionView {
    #[serde(flatten)]
    session: SessionRecord,
    events: Vec<StatusEvent>,
    segments: Vec<SegmentView>,
}

async fn get_session(State(state): State<AppState>, who: Principal, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let session = load_session(&state, &who, &id)?;
    let segments = state
        .store
        .segments(&id)?
        .into_iter()
        .map(|s| SegmentView {
            index: s.index,
            label: s.label,
            action_name: state.catalog.get(Label(s.label)).map(|c| c.name.clone()),
            start_frame: s.start_frame,
            end_frame: s.end_frame,
            mean_confidence: s.mean_confidence,
            flagged_for_review: s.flagged_for_review,
            clip_url: s.clip_path.as_ref().map(|_| format!("/sessions/{id}/segments/{}/clip", s.index)),
        })
        .collect();
    Ok(Json(SessionView { events: state.store.events(&id)?, segments, session }))
}

async fn segment_clip(State(state): State<AppState>, who: Principal, Path((id, index)): Path<(String, u32)>) -> ApiResult<Response> {
    load_session(&state, &who, &id)?;
    let path = state
        .store
        .segments(&id)?
        .into_iter()
        .find(|s| s.index == index)
        .and_then(|s| s.clip_path)
        .map(PathBuf::from)
        .ok_or_else(|| ApiError::not_found("clip_not_found", format!("session {id} has no clip {index}")))?;
    let bytes = tokio::fs::read(&path).await?;
    Ok(([(CONTENT_TYPE, "video/x-yuv4mpeg")], Body::from(bytes)).into_response())
}

// --- reports ---

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u32>,
}

async fn get_report(
    State(state): State<AppState>,
    who: Principal,
    Path(id): Path<String>,
    Query(q): Query<VersionQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let record = state.store.report(&id, q.version)?.ok_or_else(|| ApiError::not_found("report_not_found", format!("no report {id}")))?;
    load_session(&state, &who, &record.session_id)?;
    let feedback = state.store.feedback(&id)?;
    let mut body = serde_json::to_value(&record).map_err(|e| ApiError::internal(e.to_string()))?;
    body["feedback"] = serde_json::to_value(feedback).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(body))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackBody {
    scores: LikertScores,
    #[serde(default)]
    comment: String,
    /// Defaults to the latest version.
    report_version: Option<u32>,
}

async fn submit_feedback(State(state): State<AppState>, who: Principal, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    who.require_nurse()?;
    let req: FeedbackBody = parse_json(&body, "invalid_feedback")?;
    if let Some((dimension, value)) = req.scores.first_invalid() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_score",
            format!("{dimension} score {value} is outside 1-10"),
        )
        .with_detail(json!({ "dimension": dimension, "value": value })));
    }
    let record =
        state.store.report(&id, req.report_version)?.ok_or_else(|| ApiError::not_found("report_not_found", format!("no report {id}")))?;
    let stored = state.store.add_feedback(&id, record.version, &who.subject, &req.scores, &req.comment, state.now())?;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

// --- analytics ---

#[derive(Deserialize)]
struct Period {
    start: Option<NaiveDate>,
    /// Exclusive.
    end: Option<NaiveDate>,
}

async fn adherence(State(state): State<AppState>, who: Principal, Query(period): Query<Period>) -> ApiResult<Json<serde_json::Value>> {
    who.require_nurse()?;
    let patients = state.store.patients(u32::MAX, 0)?;
    let end = period.end.unwrap_or_else(|| state.now().date_naive() + Days::new(1));
    let start = period.start.or_else(|| patients.iter().map(|p| p.enrollment_date).min()).unwrap_or(end);
    if start >= end {
        return Err(ApiError::bad_request("period start must precede its end"));
    }
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for (pid, at) in state.store.session_times()? {
        let day = at.date_naive();
        if day >= start && day < end {
            *counts.entry(pid).or_default() += 1;
        }
    }
    let activity: Vec<PatientActivity> = patients
        .iter()
        .filter(|p| p.enrollment_date < end)
        .map(|p| PatientActivity {
            patient_id: p.patient_id.clone(),
            sessions: counts.get(&p.patient_id).copied().unwrap_or(0),
            enrolled_days: enrolled_days(p.enrollment_date, start, end),
        })
        .filter(|a| a.enrolled_days > 0)
        .collect();
    let stats = adherence_stats(&activity)?;
    let mut body = serde_json::to_value(stats).map_err(|e| ApiError::internal(e.to_string()))?;
    body["period"] = json!({ "start": start, "end": end });
    Ok(Json(body))
}
