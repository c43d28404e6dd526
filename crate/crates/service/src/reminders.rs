//! Next-morning exercise reminders.

use chrono::{DateTime, Utc};
use rehab_core::clinic::{next_reminder_at, offset_from_seconds};
use serde::Serialize;

use crate::db::{DueReminder, Store};
use crate::error::ApiResult;

/// Delivery channel; the default only logs.
pub trait Notifier: Send + Sync {
    fn deliver(&self, patient_id: &str, at: DateTime<Utc>) -> Result<(), String>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct LogNotifier;

impl Notifier for LogNotifier {
    fn deliver(&self, patient_id: &str, at: DateTime<Utc>) -> Result<(), String> {
        tracing::info!(patient = patient_id, scheduled_for = %at, "exercise reminder");
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReminderRun {
    /// Newly scheduled `(patient, when)`.
    pub scheduled: Vec<(String, DateTime<Utc>)>,
    pub delivered: Vec<String>,
    /// Left for the next cycle.
    pub failed: Vec<(String, String)>,
}

/// Schedules one reminder per opted-in patient at their next local 08:00, then
/// delivers every reminder that has come due. At most one reminder exists per
/// patient and local date, so repeated runs never double-deliver.
pub fn run_reminders(store: &Store, notifier: &dyn Notifier, now: DateTime<Utc>) -> ApiResult<ReminderRun> {
    let mut run = ReminderRun::default();
    for p in store.opted_in_patients()? {
        let offset = offset_from_seconds(p.utc_offset_minutes * 60)?;
        let at = next_reminder_at(now, offset);
        if store.schedule_reminder(&p.patient_id, at.with_timezone(&offset).date_naive(), at)? {
            run.scheduled.push((p.patient_id, at));
        }
    }
    for r in store.due_reminders(now)? {
        deliver(store, notifier, &r, now, &mut run)?;
    }
    Ok(run)
}

fn deliver(store: &Store, notifier: &dyn Notifier, r: &DueReminder, now: DateTime<Utc>, run: &mut ReminderRun) -> ApiResult<()> {
    match notifier.deliver(&r.patient_id, r.scheduled_for) {
        Ok(()) => {
            store.record_delivery(r, Ok(()), now)?;
            run.delivered.push(r.patient_id.clone());
        }
        Err(e) => {
            tracing::warn!(patient = %r.patient_id, error = %e, "reminder delivery failed");
            store.record_delivery(r, Err(&e), now)?;
            run.failed.push((r.patient_id.clone(), e));
        }
    }
    Ok(())
}
