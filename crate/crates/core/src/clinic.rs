//! Clinic-side rules shared by the service and its clients: framing checks,
//! session status, nurse feedback, reminders and adherence arithmetic.

use chrono::{DateTime, Days, FixedOffset, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SHOULDER_FLOOR: f32 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShoulderKeypoint {
    pub x: f32,
    pub y: f32,
    pub confidence: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FramingStatus {
    InFrame,
    OutOfFrame,
}

/// In frame iff both shoulders are confidently detected inside the image.
/// The recording client samples this once a second and pauses on `OutOfFrame`.
pub fn framing_check(
    left: &ShoulderKeypoint,
    right: &ShoulderKeypoint,
    image_size: (u32, u32),
    floor: f32,
) -> FramingStatus {
    let (w, h) = (image_size.0 as f32, image_size.1 as f32);
    let ok = |k: &ShoulderKeypoint| {
        k.confidence >= floor && k.x.is_finite() && k.y.is_finite() && (0.0..w).contains(&k.x) && (0.0..h).contains(&k.y)
    };
    if ok(left) && ok(right) {
        FramingStatus::InFrame
    } else {
        FramingStatus::OutOfFrame
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Uploaded,
    Segmented,
    Reported,
    Failed,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Uploaded => "uploaded",
            SessionStatus::Segmented => "segmented",
            SessionStatus::Reported => "reported",
            SessionStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [SessionStatus::Uploaded, SessionStatus::Segmented, SessionStatus::Reported, SessionStatus::Failed]
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown session status `{s}`")))
    }

    /// Forward one step along uploaded -> segmented -> reported, or to failed
    /// from any non-terminal state.
    pub fn can_become(self, next: SessionStatus) -> bool {
        use SessionStatus::*;
        matches!((self, next), (Uploaded, Segmented) | (Segmented, Reported) | (Uploaded | Segmented, Failed))
    }
}

pub const FEEDBACK_DIMENSIONS: [&str; 5] = ["accuracy", "completeness", "practicability", "safety", "language_quality"];

/// One nurse's 1-10 ratings of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikertScores {
    pub accuracy: u8,
    pub completeness: u8,
    pub practicability: u8,
    pub safety: u8,
    pub language_quality: u8,
}

impl LikertScores {
    pub fn values(&self) -> [(&'static str, u8); 5] {
        [
            ("accuracy", self.accuracy),
            ("completeness", self.completeness),
            ("practicability", self.practicability),
            ("safety", self.safety),
            ("language_quality", self.language_quality),
        ]
    }

    pub fn first_invalid(&self) -> Option<(&'static str, u8)> {
        self.values().into_iter().find(|(_, v)| !(1..=10).contains(v))
    }

    pub fn validate(&self) -> Result<()> {
        match self.first_invalid() {
            Some((dim, v)) => Err(Error::validation(format!("{dim} score {v} is outside 1-10"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NurseFeedback {
    pub report_id: String,
    pub nurse_id: String,
    pub scores: LikertScores,
    #[serde(default)]
    pub comment: String,
}

/// The first local 08:00 strictly after `now`.
pub fn next_reminder_at(now: DateTime<Utc>, offset: FixedOffset) -> DateTime<Utc> {
    let local = now.with_timezone(&offset);
    let eight = NaiveTime::from_hms_opt(8, 0, 0).expect("valid time");
    let mut date = local.date_naive();
    if local.time() >= eight {
        date = date + Days::new(1);
    }
    offset
        .from_local_datetime(&date.and_time(eight))
        .single()
        .expect("fixed offsets are unambiguous")
        .with_timezone(&Utc)
}

/// Seconds east of UTC, validated.
pub fn offset_from_seconds(secs: i32) -> Result<FixedOffset> {
    FixedOffset::east_opt(secs).ok_or_else(|| Error::validation(format!("utc offset {secs}s out of range")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientActivity {
    pub patient_id: String,
    pub sessions: u32,
    pub enrolled_days: u32,
}

/// Days from enrolment (or the period start, if later) up to the exclusive
/// period end.
pub fn enrolled_days(enrollment: NaiveDate, period_start: NaiveDate, period_end: NaiveDate) -> u32 {
    let from = enrollment.max(period_start);
    (period_end - from).num_days().max(0) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientFrequency {
    pub patient_id: String,
    pub sessions: u32,
    pub enrolled_days: u32,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceStats {
    pub patients: usize,
    pub total_sessions: u64,
    /// Total sessions / enrolled patients.
    pub avg_sessions: f64,
    /// Mean of the per-patient sessions-per-day.
    pub avg_frequency: f64,
    pub per_patient: Vec<PatientFrequency>,
}

pub fn adherence_stats(patients: &[PatientActivity]) -> Result<AdherenceStats> {
    if patients.is_empty() {
        return Err(Error::validation("no enrolled patients"));
    }
    let per_patient = patients
        .iter()
        .map(|p| {
            if p.enrolled_days == 0 {
                return Err(Error::validation(format!("patient {} has no enrolled days in the period", p.patient_id)));
            }
            Ok(PatientFrequency {
                patient_id: p.patient_id.clone(),
                sessions: p.sessions,
                enrolled_days: p.enrolled_days,
                frequency: p.sessions as f64 / p.enrolled_days as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = patients.len() as f64;
    let total_sessions: u64 = patients.iter().map(|p| p.sessions as u64).sum();
    Ok(AdherenceStats {
        patients: patients.len(),
        total_sessions,
        avg_sessions: total_sessions as f64 / n,
        avg_frequency: per_patient.iter().map(|p| p.frequency).sum::<f64>() / n,
        per_patient,
    })
}
