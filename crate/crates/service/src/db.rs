//! SQLite persistence: schema migrations and every query the service runs.

use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use rehab_core::clinic::{LikertScores, SessionStatus};
use rehab_core::dataset::Label;
use rehab_core::report::AssessmentReport;
use rehab_core::retrieval::KnowledgeCache;
use rehab_core::segment::ActionSegment;
use rusqlite::{params, Connection, OptionalExtension, Row, Transaction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ApiError, ApiResult};

const MIGRATIONS: &[&str] = &[
    r#"
    CREATE TABLE patients (
        patient_id TEXT PRIMARY KEY,
        enrollment_date TEXT NOT NULL,
        exercise_plan_id TEXT NOT NULL,
        reminder_opt_in INTEGER NOT NULL DEFAULT 0,
        utc_offset_minutes INTEGER NOT NULL DEFAULT 0,
        created_at TEXT NOT NULL
    );
    CREATE TABLE api_tokens (
        token_sha256 TEXT PRIMARY KEY,
        role TEXT NOT NULL CHECK (role IN ('nurse', 'patient')),
        subject TEXT NOT NULL,
        created_at TEXT NOT NULL
    );
    CREATE TABLE sessions (
        session_id TEXT PRIMARY KEY,
        patient_id TEXT NOT NULL REFERENCES patients (patient_id),
        upload_time TEXT NOT NULL,
        video_uri TEXT NOT NULL,
        pose_uri TEXT,
        status TEXT NOT NULL,
        failure_reason TEXT,
        report_id TEXT
    );
    CREATE INDEX sessions_by_patient ON sessions (patient_id, upload_time);
    CREATE TABLE session_events (
        session_id TEXT NOT NULL REFERENCES sessions (session_id),
        seq INTEGER NOT NULL,
        status TEXT NOT NULL,
        at TEXT NOT NULL,
        detail TEXT,
        PRIMARY KEY (session_id, seq)
    );
    CREATE TABLE idempotency_keys (
        patient_id TEXT NOT NULL,
        key TEXT NOT NULL,
        session_id TEXT NOT NULL REFERENCES sessions (session_id),
        PRIMARY KEY (patient_id, key)
    );
    CREATE TABLE segments (
        session_id TEXT NOT NULL REFERENCES sessions (session_id),
        idx INTEGER NOT NULL,
        label INTEGER NOT NULL,
        start_frame INTEGER NOT NULL,
        end_frame INTEGER NOT NULL,
        mean_confidence REAL NOT NULL,
        flagged INTEGER NOT NULL,
        clip_path TEXT,
        PRIMARY KEY (session_id, idx)
    );
    CREATE TABLE reports (
        report_id TEXT NOT NULL,
        version INTEGER NOT NULL,
        session_id TEXT NOT NULL REFERENCES sessions (session_id),
        body TEXT NOT NULL,
        model_fingerprint TEXT NOT NULL,
        created_at TEXT NOT NULL,
        PRIMARY KEY (report_id, version)
    );
    CREATE TABLE feedback (
        feedback_id INTEGER PRIMARY KEY AUTOINCREMENT,
        report_id TEXT NOT NULL,
        report_version INTEGER NOT NULL,
        nurse_id TEXT NOT NULL,
        accuracy INTEGER NOT NULL CHECK (accuracy BETWEEN 1 AND 10),
        completeness INTEGER NOT NULL CHECK (completeness BETWEEN 1 AND 10),
        practicability INTEGER NOT NULL CHECK (practicability BETWEEN 1 AND 10),
        safety INTEGER NOT NULL CHECK (safety BETWEEN 1 AND 10),
        language_quality INTEGER NOT NULL CHECK (language_quality BETWEEN 1 AND 10),
        comment TEXT NOT NULL,
        created_at TEXT NOT NULL,
        FOREIGN KEY (report_id, report_version) REFERENCES reports (report_id, version)
    );
    CREATE TABLE jobs (
        job_id INTEGER PRIMARY KEY AUTOINCREMENT,
        session_id TEXT NOT NULL REFERENCES sessions (session_id),
        kind TEXT NOT NULL,
        status TEXT NOT NULL,
        attempts INTEGER NOT NULL DEFAULT 0,
        available_at TEXT NOT NULL,
        lease_until TEXT,
        last_error TEXT,
        created_at TEXT NOT NULL
    );
    CREATE INDEX jobs_ready ON jobs (status, available_at);
    CREATE TABLE knowledge_cache (
        version INTEGER PRIMARY KEY,
        body TEXT NOT NULL,
        created_at TEXT NOT NULL
    );
    CREATE TABLE reminders (
        patient_id TEXT NOT NULL REFERENCES patients (patient_id),
        local_date TEXT NOT NULL,
        scheduled_for TEXT NOT NULL,
        status TEXT NOT NULL,
        attempts INTEGER NOT NULL DEFAULT 0,
        last_error TEXT,
        sent_at TEXT,
        PRIMARY KEY (patient_id, local_date)
    );
    "#,
];

/// Fixed-width UTC timestamps so that text comparison is chronological.
pub fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn parse_ts(s: &str) -> rusqlite::Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn parse_date(s: &str) -> rusqlite::Result<NaiveDate> {
    s.parse()
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn parse_status(s: &str) -> rusqlite::Result<SessionStatus> {
    SessionStatus::parse(s)
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn token_hash(raw: &str) -> String {
    hex::encode(Sha256::digest(raw.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Nurse,
    Patient,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Nurse => "nurse",
            Role::Patient => "patient",
        }
    }
}

/// The authenticated caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Principal {
    pub role: Role,
    /// Nurse id or patient id.
    pub subject: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: String,
    pub enrollment_date: NaiveDate,
    pub exercise_plan_id: String,
    pub reminder_opt_in: bool,
    /// Patient-local time zone for reminders.
    pub utc_offset_minutes: i32,
}

impl Patient {
    fn from_row(r: &Row) -> rusqlite::Result<Self> {
        Ok(Patient {
            patient_id: r.get(0)?,
            enrollment_date: parse_date(&r.get::<_, String>(1)?)?,
            exercise_plan_id: r.get(2)?,
            reminder_opt_in: r.get(3)?,
            utc_offset_minutes: r.get(4)?,
        })
    }
}

const PATIENT_COLS: &str = "patient_id, enrollment_date, exercise_plan_id, reminder_opt_in, utc_offset_minutes";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub patient_id: String,
    pub upload_time: DateTime<Utc>,
    pub video_uri: String,
    pub pose_uri: Option<String>,
    pub status: SessionStatus,
    pub failure_reason: Option<String>,
    pub report_id: Option<String>,
}

impl SessionRecord {
    fn from_row(r: &Row) -> rusqlite::Result<Self> {
        Ok(SessionRecord {
            session_id: r.get(0)?,
            patient_id: r.get(1)?,
            upload_time: parse_ts(&r.get::<_, String>(2)?)?,
            video_uri: r.get(3)?,
            pose_uri: r.get(4)?,
            status: parse_status(&r.get::<_, String>(5)?)?,
            failure_reason: r.get(6)?,
            report_id: r.get(7)?,
        })
    }
}

const SESSION_COLS: &str = "session_id, patient_id, upload_time, video_uri, pose_uri, status, failure_reason, report_id";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusEvent {
    pub seq: u32,
    pub status: SessionStatus,
    pub at: DateTime<Utc>,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredSegment {
    pub index: u32,
    pub label: u8,
    pub start_frame: u64,
    pub end_frame: u64,
    pub mean_confidence: f32,
    pub flagged_for_review: bool,
    #[serde(skip)]
    pub clip_path: Option<String>,
}

impl StoredSegment {
    pub fn to_action_segment(&self, video_id: &str) -> ActionSegment {
        ActionSegment {
            video_id: video_id.to_string(),
            label: Label(self.label),
            start_frame: self.start_frame,
            end_frame: self.end_frame,
            mean_confidence: self.mean_confidence,
            flagged_for_review: self.flagged_for_review,
            subclip_uri: self.clip_path.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRecord {
    pub report_id: String,
    pub version: u32,
    pub session_id: String,
    pub model_fingerprint: String,
    pub created_at: DateTime<Utc>,
    pub report: AssessmentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackRecord {
    pub feedback_id: i64,
    pub report_id: String,
    pub report_version: u32,
    pub nurse_id: String,
    pub scores: LikertScores,
    pub comment: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    /// Segment then report, resuming from whatever stage the session reached.
    Process,
    /// Produce a new report version from the stored segments.
    RegenerateReport,
}

impl JobKind {
    fn as_str(self) -> &'static str {
        match self {
            JobKind::Process => "process",
            JobKind::RegenerateReport => "regenerate_report",
        }
    }

    fn parse(s: &str) -> rusqlite::Result<Self> {
        match s {
            "process" => Ok(JobKind::Process),
            "regenerate_report" => Ok(JobKind::RegenerateReport),
            _ => Err(rusqlite::Error::InvalidColumnType(0, s.to_string(), rusqlite::types::Type::Text)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub job_id: i64,
    pub session_id: String,
    pub kind: JobKind,
    /// Including the current one.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DueReminder {
    pub patient_id: String,
    pub local_date: NaiveDate,
    pub scheduled_for: DateTime<Utc>,
}

pub struct Store {
    conn: Mutex<Connection>,
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> ApiResult<Self> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let conn = Connection::open(path)?;
        conn.busy_timeout(Duration::from_secs(5))?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "foreign_keys", true)?;
        Ok(Store { conn: Mutex::new(conn) })
    }

    fn with<T>(&self, f: impl FnOnce(&mut Connection) -> ApiResult<T>) -> ApiResult<T> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut conn)
    }

    fn tx<T>(&self, f: impl FnOnce(&Transaction) -> ApiResult<T>) -> ApiResult<T> {
        self.with(|c| {
            let tx = c.transaction()?;
            let out = f(&tx)?;
            tx.commit()?;
            Ok(out)
        })
    }

    /// Applies outstanding migrations; returns how many ran.
    pub fn migrate(&self) -> ApiResult<usize> {
        self.with(|c| {
            let current: usize = c.pragma_query_value(None, "user_version", |r| r.get::<_, i64>(0))? as usize;
            for (i, sql) in MIGRATIONS.iter().enumerate().skip(current) {
                let tx = c.transaction()?;
                tx.execute_batch(sql)?;
                tx.pragma_update(None, "user_version", (i + 1) as i64)?;
                tx.commit()?;
            }
            Ok(MIGRATIONS.len().saturating_sub(current))
        })
    }

    pub fn schema_version(&self) -> ApiResult<usize> {
        self.with(|c| Ok(c.pragma_query_value(None, "user_version", |r| r.get::<_, i64>(0))? as usize))
    }

    // --- tokens ---

    /// Creates a bearer token; only its hash is stored.
    pub fn issue_token(&self, role: Role, subject: &str, now: DateTime<Utc>) -> ApiResult<String> {
        let raw = format!("{}{}", uuid::Uuid::new_v4().simple(), uuid::Uuid::new_v4().simple());
        self.with(|c| {
            c.execute(
                "INSERT INTO api_tokens (token_sha256, role, subject, created_at) VALUES (?1, ?2, ?3, ?4)",
                params![token_hash(&raw), role.as_str(), subject, ts(now)],
            )?;
            Ok(())
        })?;
        Ok(raw)
    }

    pub fn principal(&self, raw_token: &str) -> ApiResult<Option<Principal>> {
        self.with(|c| {
            Ok(c.query_row(
                "SELECT role, subject FROM api_tokens WHERE token_sha256 = ?1",
                [token_hash(raw_token)],
                |r| {
                    let role = match r.get::<_, String>(0)?.as_str() {
                        "nurse" => Role::Nurse,
                        _ => Role::Patient,
                    };
                    Ok(Principal { role, subject: r.get(1)? })
                },
            )
            .optional()?)
        })
    }

    // --- patients ---

    pub fn create_patient(&self, p: &Patient, now: DateTime<Utc>) -> ApiResult<()> {
        self.tx(|tx| {
            let exists: bool =
                tx.query_row("SELECT EXISTS (SELECT 1 FROM patients WHERE patient_id = ?1)", [&p.patient_id], |r| r.get(0))?;
            if exists {
                return Err(ApiError::conflict("patient_exists", format!("patient {} is already registered", p.patient_id)));
            }
            tx.execute(
                "INSERT INTO patients (patient_id, enrollment_date, exercise_plan_id, reminder_opt_in, utc_offset_minutes, created_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![p.patient_id, p.enrollment_date.to_string(), p.exercise_plan_id, p.reminder_opt_in, p.utc_offset_minutes, ts(now)],
            )?;
            Ok(())
        })
    }

    pub fn patient(&self, id: &str) -> ApiResult<Option<Patient>> {
        self.with(|c| {
            Ok(c.query_row(&format!("SELECT {PATIENT_COLS} FROM patients WHERE patient_id = ?1"), [id], Patient::from_row)
                .optional()?)
        })
    }

    pub fn patients(&self, limit: u32, offset: u32) -> ApiResult<Vec<Patient>> {
        self.with(|c| {
            let mut st = c.prepare(&format!("SELECT {PATIENT_COLS} FROM patients ORDER BY patient_id LIMIT ?1 OFFSET ?2"))?;
            let rows = st.query_map(params![limit, offset], Patient::from_row)?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    pub fn set_reminder_opt_in(&self, id: &str, opt_in: bool, utc_offset_minutes: Option<i32>) -> ApiResult<Patient> {
        self.with(|c| {
            let n = c.execute(
                "UPDATE patients SET reminder_opt_in = ?2, utc_offset_minutes = COALESCE(?3, utc_offset_minutes) WHERE patient_id = ?1",
                params![id, opt_in, utc_offset_minutes],
            )?;
            if n == 0 {
                return Err(ApiError::not_found("patient_not_found", format!("no patient {id}")));
            }
            Ok(())
        })?;
        self.patient(id)?.ok_or_else(|| ApiError::not_found("patient_not_found", format!("no patient {id}")))
    }

    // --- sessions ---

    /// Persists an uploaded session and queues its processing. A repeated
    /// idempotency key for the same patient returns the original session instead.
    pub fn create_session(
        &self,
        patient_id: &str,
        video_uri: &str,
        pose_uri: Option<&str>,
        idempotency_key: Option<&str>,
        now: DateTime<Utc>,
    ) -> ApiResult<(SessionRecord, bool)> {
        let (id, created) = self.tx(|tx| {
            let known: bool =
                tx.query_row("SELECT EXISTS (SELECT 1 FROM patients WHERE patient_id = ?1)", [patient_id], |r| r.get(0))?;
            if !known {
                return Err(ApiError::not_found("patient_not_found", format!("no patient {patient_id}")));
            }
            if let Some(key) = idempotency_key {
                let prior: Option<String> = tx
                    .query_row(
                        "SELECT session_id FROM idempotency_keys WHERE patient_id = ?1 AND key = ?2",
                        params![patient_id, key],
                        |r| r.get(0),
                    )
                    .optional()?;
                if let Some(prior) = prior {
                    return Ok((prior, false));
                }
            }
            let id = uuid::Uuid::new_v4().to_string();
            tx.execute(
                "INSERT INTO sessions (session_id, patient_id, upload_time, video_uri, pose_uri, status) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![id, patient_id, ts(now), video_uri, pose_uri, SessionStatus::Uploaded.as_str()],
            )?;
            append_event(tx, &id, SessionStatus::Uploaded, None, now)?;
            if let Some(key) = idempotency_key {
                tx.execute(
                    "INSERT INTO idempotency_keys (patient_id, key, session_id) VALUES (?1, ?2, ?3)",
                    params![patient_id, key, id],
                )?;
            }
            enqueue(tx, &id, JobKind::Process, now)?;
            Ok((id, true))
        })?;
        Ok((self.session(&id)?.expect("session just written"), created))
    }

    pub fn session(&self, id: &str) -> ApiResult<Option<SessionRecord>> {
        self.with(|c| {
            Ok(c.query_row(&format!("SELECT {SESSION_COLS} FROM sessions WHERE session_id = ?1"), [id], SessionRecord::from_row)
                .optional()?)
        })
    }

    pub fn patient_sessions(&self, patient_id: &str) -> ApiResult<Vec<SessionRecord>> {
        self.with(|c| {
            let mut st =
                c.prepare(&format!("SELECT {SESSION_COLS} FROM sessions WHERE patient_id = ?1 ORDER BY upload_time, session_id"))?;
            let rows = st.query_map([patient_id], SessionRecord::from_row)?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    /// `(patient_id, upload_time)` of every session.
    pub fn session_times(&self) -> ApiResult<Vec<(String, DateTime<Utc>)>> {
        self.with(|c| {
            let mut st = c.prepare("SELECT patient_id, upload_time FROM sessions")?;
            let rows = st.query_map([], |r| Ok((r.get(0)?, parse_ts(&r.get::<_, String>(1)?)?)))?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    pub fn events(&self, session_id: &str) -> ApiResult<Vec<StatusEvent>> {
        self.with(|c| {
            let mut st = c.prepare("SELECT seq, status, at, detail FROM session_events WHERE session_id = ?1 ORDER BY seq")?;
            let rows = st.query_map([session_id], |r| {
                Ok(StatusEvent {
                    seq: r.get(0)?,
                    status: parse_status(&r.get::<_, String>(1)?)?,
                    at: parse_ts(&r.get::<_, String>(2)?)?,
                    detail: r.get(3)?,
                })
            })?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    pub fn segments(&self, session_id: &str) -> ApiResult<Vec<StoredSegment>> {
        self.with(|c| {
            let mut st = c.prepare(
                "SELECT idx, label, start_frame, end_frame, mean_confidence, flagged, clip_path
                 FROM segments WHERE session_id = ?1 ORDER BY idx",
            )?;
            let rows = st.query_map([session_id], |r| {
                Ok(StoredSegment {
                    index: r.get(0)?,
                    label: r.get(1)?,
                    start_frame: r.get::<_, i64>(2)? as u64,
                    end_frame: r.get::<_, i64>(3)? as u64,
                    mean_confidence: r.get::<_, f64>(4)? as f32,
                    flagged_for_review: r.get(5)?,
                    clip_path: r.get(6)?,
                })
            })?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    /// Replaces the session's segments and moves it to `segmented`.
    pub fn save_segments(&self, session_id: &str, segments: &[ActionSegment], now: DateTime<Utc>) -> ApiResult<()> {
        self.tx(|tx| {
            tx.execute("DELETE FROM segments WHERE session_id = ?1", [session_id])?;
            for (i, s) in segments.iter().enumerate() {
                tx.execute(
                    "INSERT INTO segments (session_id, idx, label, start_frame, end_frame, mean_confidence, flagged, clip_path)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
                    params![
                        session_id,
                        i as u32,
                        s.label.0,
                        s.start_frame as i64,
                        s.end_frame as i64,
                        s.mean_confidence as f64,
                        s.flagged_for_review,
                        s.subclip_uri
                    ],
                )?;
            }
            transition(tx, session_id, SessionStatus::Segmented, Some(&format!("{} segments", segments.len())), now)
        })
    }

    /// Stores a new report version; the first one moves the session to `reported`.
    pub fn save_report(&self, session_id: &str, report: &AssessmentReport, now: DateTime<Utc>) -> ApiResult<(String, u32)> {
        let body = serde_json::to_string(report).map_err(|e| ApiError::internal(e.to_string()))?;
        self.tx(|tx| {
            let (status, report_id): (String, Option<String>) = tx.query_row(
                "SELECT status, report_id FROM sessions WHERE session_id = ?1",
                [session_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )?;
            let status = parse_status(&status)?;
            if !matches!(status, SessionStatus::Segmented | SessionStatus::Reported) {
                return Err(ApiError::conflict("invalid_transition", format!("session {session_id} is {}", status.as_str())));
            }
            let report_id = report_id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
            let version: u32 = tx.query_row(
                "SELECT COALESCE(MAX(version), 0) + 1 FROM reports WHERE report_id = ?1",
                [&report_id],
                |r| r.get(0),
            )?;
            tx.execute(
                "INSERT INTO reports (report_id, version, session_id, body, model_fingerprint, created_at) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![report_id, version, session_id, body, report.model_fingerprint, ts(now)],
            )?;
            tx.execute("UPDATE sessions SET report_id = ?2 WHERE session_id = ?1", params![session_id, report_id])?;
            if status == SessionStatus::Segmented {
                transition(tx, session_id, SessionStatus::Reported, Some(&format!("report {report_id} v{version}")), now)?;
            }
            Ok((report_id, version))
        })
    }

    pub fn fail_session(&self, session_id: &str, reason: &str, now: DateTime<Utc>) -> ApiResult<()> {
        self.tx(|tx| {
            transition(tx, session_id, SessionStatus::Failed, Some(reason), now)?;
            tx.execute("UPDATE sessions SET failure_reason = ?2 WHERE session_id = ?1", params![session_id, reason])?;
            Ok(())
        })
    }

    // --- reports and feedback ---

    /// Latest version unless `version` is given.
    pub fn report(&self, report_id: &str, version: Option<u32>) -> ApiResult<Option<ReportRecord>> {
        let row: Option<(u32, String, String, String, String)> = self.with(|c| {
            Ok(c.query_row(
                "SELECT version, session_id, body, model_fingerprint, created_at FROM reports
                 WHERE report_id = ?1 AND (?2 IS NULL OR version = ?2) ORDER BY version DESC LIMIT 1",
                params![report_id, version],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?)),
            )
            .optional()?)
        })?;
        row.map(|(version, session_id, body, model_fingerprint, created_at)| {
            Ok(ReportRecord {
                report_id: report_id.to_string(),
                version,
                session_id,
                model_fingerprint,
                created_at: parse_ts(&created_at)?,
                report: serde_json::from_str(&body).map_err(|e| ApiError::internal(format!("stored report: {e}")))?,
            })
        })
        .transpose()
    }

    pub fn add_feedback(
        &self,
        report_id: &str,
        report_version: u32,
        nurse_id: &str,
        scores: &LikertScores,
        comment: &str,
        now: DateTime<Utc>,
    ) -> ApiResult<FeedbackRecord> {
        let feedback_id = self.with(|c| {
            c.execute(
                "INSERT INTO feedback (report_id, report_version, nurse_id, accuracy, completeness, practicability, safety,
                                       language_quality, comment, created_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)",
                params![
                    report_id,
                    report_version,
                    nurse_id,
                    scores.accuracy,
                    scores.completeness,
                    scores.practicability,
                    scores.safety,
                    scores.language_quality,
                    comment,
                    ts(now)
                ],
            )?;
            Ok(c.last_insert_rowid())
        })?;
        Ok(FeedbackRecord {
            feedback_id,
            report_id: report_id.to_string(),
            report_version,
            nurse_id: nurse_id.to_string(),
            scores: *scores,
            comment: comment.to_string(),
            created_at: now,
        })
    }

    pub fn feedback(&self, report_id: &str) -> ApiResult<Vec<FeedbackRecord>> {
        self.with(|c| {
            let mut st = c.prepare(
                "SELECT feedback_id, report_version, nurse_id, accuracy, completeness, practicability, safety, language_quality,
                        comment, created_at
                 FROM feedback WHERE report_id = ?1 ORDER BY feedback_id",
            )?;
            let rows = st.query_map([report_id], |r| {
                Ok(FeedbackRecord {
                    feedback_id: r.get(0)?,
                    report_id: report_id.to_string(),
                    report_version: r.get(1)?,
                    nurse_id: r.get(2)?,
                    scores: LikertScores {
                        accuracy: r.get(3)?,
                        completeness: r.get(4)?,
                        practicability: r.get(5)?,
                        safety: r.get(6)?,
                        language_quality: r.get(7)?,
                    },
                    comment: r.get(8)?,
                    created_at: parse_ts(&r.get::<_, String>(9)?)?,
                })
            })?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    // --- jobs ---

    pub fn enqueue(&self, session_id: &str, kind: JobKind, now: DateTime<Utc>) -> ApiResult<i64> {
        self.tx(|tx| enqueue(tx, session_id, kind, now))
    }

    /// Takes the oldest ready job whose session has no other job in flight.
    /// Jobs whose lease expired (a crashed worker) are ready again.
    pub fn claim_job(&self, now: DateTime<Utc>, lease: Duration) -> ApiResult<Option<Job>> {
        let now_s = ts(now);
        let until = ts(now + chrono::Duration::from_std(lease).unwrap_or(chrono::Duration::MAX));
        self.tx(|tx| {
            let job = tx
                .query_row(
                    "SELECT j.job_id, j.session_id, j.kind, j.attempts FROM jobs j
                     WHERE ((j.status = 'queued' AND j.available_at <= ?1) OR (j.status = 'running' AND j.lease_until <= ?1))
                       AND NOT EXISTS (SELECT 1 FROM jobs o WHERE o.session_id = j.session_id AND o.job_id <> j.job_id
                                       AND o.status = 'running' AND o.lease_until > ?1)
                     ORDER BY j.job_id LIMIT 1",
                    [&now_s],
                    |r| {
                        Ok(Job {
                            job_id: r.get(0)?,
                            session_id: r.get(1)?,
                            kind: JobKind::parse(&r.get::<_, String>(2)?)?,
                            attempts: r.get::<_, u32>(3)? + 1,
                        })
                    },
                )
                .optional()?;
            if let Some(job) = &job {
                tx.execute(
                    "UPDATE jobs SET status = 'running', attempts = attempts + 1, lease_until = ?2 WHERE job_id = ?1",
                    params![job.job_id, until],
                )?;
            }
            Ok(job)
        })
    }

    pub fn complete_job(&self, job_id: i64) -> ApiResult<()> {
        self.finish_job(job_id, "done", None, None)
    }

    pub fn retry_job(&self, job_id: i64, error: &str, available_at: DateTime<Utc>) -> ApiResult<()> {
        self.finish_job(job_id, "queued", Some(error), Some(available_at))
    }

    pub fn fail_job(&self, job_id: i64, error: &str) -> ApiResult<()> {
        self.finish_job(job_id, "failed", Some(error), None)
    }

    fn finish_job(&self, job_id: i64, status: &str, error: Option<&str>, available_at: Option<DateTime<Utc>>) -> ApiResult<()> {
        self.with(|c| {
            c.execute(
                "UPDATE jobs SET status = ?2, last_error = COALESCE(?3, last_error), lease_until = NULL,
                                 available_at = COALESCE(?4, available_at)
                 WHERE job_id = ?1",
                params![job_id, status, error, available_at.map(ts)],
            )?;
            Ok(())
        })
    }

    /// Jobs queued or running.
    pub fn open_jobs(&self) -> ApiResult<usize> {
        self.with(|c| {
            Ok(c.query_row("SELECT COUNT(*) FROM jobs WHERE status IN ('queued', 'running')", [], |r| r.get::<_, i64>(0))?
                as usize)
        })
    }

    // --- knowledge ---

    pub fn save_knowledge(&self, cache: &KnowledgeCache, now: DateTime<Utc>) -> ApiResult<()> {
        let body = cache.to_json()?;
        self.with(|c| {
            c.execute(
                "INSERT OR REPLACE INTO knowledge_cache (version, body, created_at) VALUES (?1, ?2, ?3)",
                params![cache.version, body, ts(now)],
            )?;
            Ok(())
        })
    }

    pub fn latest_knowledge(&self) -> ApiResult<Option<KnowledgeCache>> {
        let body: Option<String> = self.with(|c| {
            Ok(c.query_row("SELECT body FROM knowledge_cache ORDER BY version DESC LIMIT 1", [], |r| r.get(0)).optional()?)
        })?;
        Ok(body.map(|b| KnowledgeCache::from_json(&b)).transpose()?)
    }

    // --- reminders ---

    pub fn opted_in_patients(&self) -> ApiResult<Vec<Patient>> {
        self.with(|c| {
            let mut st =
                c.prepare(&format!("SELECT {PATIENT_COLS} FROM patients WHERE reminder_opt_in = 1 ORDER BY patient_id"))?;
            let rows = st.query_map([], Patient::from_row)?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    /// False when a reminder for that patient and local date already exists.
    pub fn schedule_reminder(&self, patient_id: &str, local_date: NaiveDate, at: DateTime<Utc>) -> ApiResult<bool> {
        self.with(|c| {
            let n = c.execute(
                "INSERT OR IGNORE INTO reminders (patient_id, local_date, scheduled_for, status) VALUES (?1, ?2, ?3, 'pending')",
                params![patient_id, local_date.to_string(), ts(at)],
            )?;
            Ok(n == 1)
        })
    }

    /// Pending or previously failed reminders whose time has come, for patients
    /// still opted in.
    pub fn due_reminders(&self, now: DateTime<Utc>) -> ApiResult<Vec<DueReminder>> {
        self.with(|c| {
            let mut st = c.prepare(
                "SELECT r.patient_id, r.local_date, r.scheduled_for FROM reminders r
                 JOIN patients p ON p.patient_id = r.patient_id
                 WHERE r.status IN ('pending', 'failed') AND r.scheduled_for <= ?1 AND p.reminder_opt_in = 1
                 ORDER BY r.scheduled_for, r.patient_id",
            )?;
            let rows = st.query_map([ts(now)], |r| {
                Ok(DueReminder {
                    patient_id: r.get(0)?,
                    local_date: parse_date(&r.get::<_, String>(1)?)?,
                    scheduled_for: parse_ts(&r.get::<_, String>(2)?)?,
                })
            })?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }

    pub fn record_delivery(&self, r: &DueReminder, outcome: Result<(), &str>, now: DateTime<Utc>) -> ApiResult<()> {
        self.with(|c| {
            match outcome {
                Ok(()) => c.execute(
                    "UPDATE reminders SET status = 'sent', attempts = attempts + 1, sent_at = ?3
                     WHERE patient_id = ?1 AND local_date = ?2",
                    params![r.patient_id, r.local_date.to_string(), ts(now)],
                )?,
                Err(e) => c.execute(
                    "UPDATE reminders SET status = 'failed', attempts = attempts + 1, last_error = ?3
                     WHERE patient_id = ?1 AND local_date = ?2",
                    params![r.patient_id, r.local_date.to_string(), e],
                )?,
            };
            Ok(())
        })
    }

    pub fn sent_reminders(&self, patient_id: &str) -> ApiResult<Vec<NaiveDate>> {
        self.with(|c| {
            let mut st =
                c.prepare("SELECT local_date FROM reminders WHERE patient_id = ?1 AND status = 'sent' ORDER BY local_date")?;
            let rows = st.query_map([patient_id], |r| parse_date(&r.get::<_, String>(0)?))?;
            Ok(rows.collect::<rusqlite::Result<_>>()?)
        })
    }
}

fn enqueue(tx: &Transaction, session_id: &str, kind: JobKind, now: DateTime<Utc>) -> ApiResult<i64> {
    tx.execute(
        "INSERT INTO jobs (session_id, kind, status, available_at, created_at) VALUES (?1, ?2, 'queued', ?3, ?3)",
        params![session_id, kind.as_str(), ts(now)],
    )?;
    Ok(tx.last_insert_rowid())
}

fn append_event(tx: &Transaction, session_id: &str, status: SessionStatus, detail: Option<&str>, now: DateTime<Utc>) -> ApiResult<()> {
    tx.execute(
        "INSERT INTO session_events (session_id, seq, status, at, detail)
         SELECT ?1, COALESCE(MAX(seq), 0) + 1, ?2, ?3, ?4 FROM session_events WHERE session_id = ?1",
        params![session_id, status.as_str(), ts(now), detail],
    )?;
    Ok(())
}

fn transition(tx: &Transaction, session_id: &str, next: SessionStatus, detail: Option<&str>, now: DateTime<Utc>) -> ApiResult<()> {
    let current: Option<String> =
        tx.query_row("SELECT status FROM sessions WHERE session_id = ?1", [session_id], |r| r.get(0)).optional()?;
    let current = parse_status(&current.ok_or_else(|| ApiError::not_found("session_not_found", format!("no session {session_id}")))?)?;
    if !current.can_become(next) {
        return Err(ApiError::conflict(
            "invalid_transition",
            format!("session {session_id} cannot go from {} to {}", current.as_str(), next.as_str()),
        ));
    }
    tx.execute("UPDATE sessions SET status = ?2 WHERE session_id = ?1", params![session_id, next.as_str()])?;
    append_event(tx, session_id, next, detail, now)
}
