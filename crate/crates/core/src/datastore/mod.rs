//! Per-user wearable record store.
//!
//! Records are kept in ordered in-memory indexes and written out as a single
//! JSON-lines file (itself valid ingestion input) via write-temp-then-rename.
//! Ingestion is an idempotent upsert keyed on (day, kind, start time), so the
//! same set of lines in any order yields the same store.

mod query;

pub use query::{run_query, Aggregate, AnalyticsQuery, AnalyticsResult, DateRange, Fact, Metric};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    validate_activity_record, validate_physio_sample, validate_sleep_record, ActivityRecord, PhysioSample, RawActivity,
    RawPhysio, RawSleep, SleepRecord, Timestamp, UserId, ValidationError,
};

/// Fixed reply for any analytics request that cannot be answered.
pub const UNAVAILABLE_MESSAGE: &str = "I am sorry, I am not able to provide the information at the moment.";

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("I am sorry, I am not able to provide the information at the moment.")]
    Unavailable,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store file {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Sleep,
    Activity,
    Physio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based line number in the input.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub sleep: usize,
    pub activity: usize,
    pub physio: usize,
    pub errors: Vec<LineError>,
    /// Sleep records that were inserted or changed by this ingest.
    #[serde(skip)]
    pub new_sleep: Vec<SleepRecord>,
}

#[derive(Debug, Error)]
enum LineParseError {
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Validation(#[from] ValidationError),
    #[error("record does not match the sleep, activity or physiological schema")]
    UnknownSchema,
    #[error("record belongs to user `{0}`")]
    WrongUser(String),
}

enum Parsed {
    Sleep(SleepRecord),
    Activity(ActivityRecord),
    Physio(PhysioSample),
}

fn classify_line(value: &serde_json::Map<String, serde_json::Value>) -> Option<RecordKind> {
    if let Some(kind) = value.get("type").and_then(|v| v.as_str()) {
        return match kind {
            "sleep" => Some(RecordKind::Sleep),
            "activity" => Some(RecordKind::Activity),
            "physio" | "physiological" => Some(RecordKind::Physio),
            _ => None,
        };
    }
    if value.contains_key("bedtime_start") || value.contains_key("total_sleep_duration") {
        Some(RecordKind::Sleep)
    } else if value.contains_key("activity_type") {
        Some(RecordKind::Activity)
    } else if value.contains_key("stress_level") || value.contains_key("average_heart_rate") {
        Some(RecordKind::Physio)
    } else {
        None
    }
}

fn parse_line(line: &str) -> Result<Parsed, LineParseError> {
    let value: serde_json::Value = serde_json::from_str(line)?;
    let obj = value.as_object().ok_or(LineParseError::UnknownSchema)?;
    match classify_line(obj).ok_or(LineParseError::UnknownSchema)? {
        RecordKind::Sleep => Ok(Parsed::Sleep(validate_sleep_record(serde_json::from_value::<RawSleep>(value)?)?)),
        RecordKind::Activity => Ok(Parsed::Activity(validate_activity_record(serde_json::from_value::<RawActivity>(
            value,
        )?)?)),
        RecordKind::Physio => Ok(Parsed::Physio(validate_physio_sample(serde_json::from_value::<RawPhysio>(value)?)?)),
    }
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    #[serde(rename = "type")]
    kind: RecordKind,
    #[serde(flatten)]
    record: &'a T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datastore {
    user_id: UserId,
    sleep: BTreeMap<(NaiveDate, Timestamp), SleepRecord>,
    activity: BTreeMap<(NaiveDate, Timestamp), ActivityRecord>,
    physio: BTreeMap<NaiveDate, PhysioSample>,
    path: Option<PathBuf>,
}

impl Datastore {
    pub fn new(user_id: UserId) -> Self {
        Self {
            user_id,
            sleep: BTreeMap::new(),
            activity: BTreeMap::new(),
            physio: BTreeMap::new(),
            path: None,
        }
    }

    /// Opens (or starts) the store backed by `path`.
    pub fn open(user_id: UserId, path: impl AsRef<Path>) -> Result<Self, DatastoreError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self::new(user_id);
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            let report = store.ingest_lines(&text);
            if let Some(err) = report.errors.first() {
                return Err(DatastoreError::Corrupt {
                    path,
                    line: err.line,
                    message: err.message.clone(),
                });
            }
        }
        store.path = Some(path);
        Ok(store)
    }

    pub fn user_id(&self) -> &UserId {
        &self.user_id
    }

    pub fn sleep_records(&self) -> impl Iterator<Item = &SleepRecord> {
        self.sleep.values()
    }

    pub fn activity_records(&self) -> impl Iterator<Item = &ActivityRecord> {
        self.activity.values()
    }

    pub fn physio_samples(&self) -> impl Iterator<Item = &PhysioSample> {
        self.physio.values()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.sleep.len(), self.activity.len(), self.physio.len())
    }

    /// Upserts every valid line; invalid lines are reported, not fatal.
    pub fn ingest_lines(&mut self, text: &str) -> IngestReport {
        let mut report = IngestReport::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed = parse_line(line).and_then(|p| {
                let owner = match &p {
                    Parsed::Sleep(r) => &r.user_id,
                    Parsed::Activity(r) => &r.user_id,
                    Parsed::Physio(r) => &r.user_id,
                };
                if owner != &self.user_id {
                    Err(LineParseError::WrongUser(owner.to_string()))
                } else {
                    Ok(p)
                }
            });
            match parsed {
                Ok(Parsed::Sleep(r)) => {
                    report.sleep += 1;
                    let key = (r.day, r.bedtime_start);
                    if self.sleep.get(&key) != Some(&r) {
                        report.new_sleep.push(r.clone());
                        self.sleep.insert(key, r);
                    }
                }
                Ok(Parsed::Activity(r)) => {
                    report.activity += 1;
                    self.activity.insert((r.day, r.start_time), r);
                }
                Ok(Parsed::Physio(r)) => {
                    report.physio += 1;
                    self.physio.insert(r.day, r);
                }
                Err(e) => report.errors.push(LineError {
                    line: i + 1,
                    message: e.to_string(),
                }),
            }
        }
        report
    }

    /// Canonical JSON-lines rendering: sleep, then activity, then physio, each
    /// in key order.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        let mut push = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        for r in self.sleep.values() {
            push(serde_json::to_string(&Tagged { kind: RecordKind::Sleep, record: &RawSleep::from(r) }).expect("serializable"));
        }
        for r in self.activity.values() {
            push(serde_json::to_string(&Tagged { kind: RecordKind::Activity, record: &RawActivity::from(r) }).expect("serializable"));
        }
        for r in self.physio.values() {
            push(serde_json::to_string(&Tagged { kind: RecordKind::Physio, record: &RawPhysio::from(r) }).expect("serializable"));
        }
        out
    }

    /// Writes the store to its backing file, if any.
    pub fn flush(&self) -> Result<(), DatastoreError> {
        if let Some(path) = &self.path {
            write_atomic(path, self.to_lines().as_bytes())?;
        }
        Ok(())
    }

    /// The longest sleep whose wake-up day is `day`.
    pub fn longest_sleep_for_day(&self, day: NaiveDate) -> Result<&SleepRecord, DatastoreError> {
        self.sleep
            .range((day, chrono::DateTime::<chrono::Utc>::MIN_UTC.fixed_offset())..)
            .take_while(|((d, _), _)| *d == day)
            .map(|(_, r)| r)
            // Earliest start wins among equal durations.
            .fold(None::<&SleepRecord>, |best, r| match best {
                Some(b) if b.total_sleep_seconds >= r.total_sleep_seconds => Some(b),
                _ => Some(r),
            })
            .ok_or(DatastoreError::Unavailable)
    }

    /// Longest sleep per wake-up day within `range`, in day order.
    pub(crate) fn main_sleeps(&self, range: &DateRange) -> Vec<&SleepRecord> {
        let mut days: Vec<NaiveDate> = self
            .sleep
            .keys()
            .map(|(d, _)| *d)
            .filter(|d| range.contains(*d))
            .collect();
        days.dedup();
        days.into_iter()
            .filter_map(|d| self.longest_sleep_for_day(d).ok())
            .collect()
    }
}

/// Writes `bytes` to a sibling temp file, syncs, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sleep_line(user: &str, day: &str, start: &str, end: &str, total: u64, score: u8) -> String {
        serde_json::json!({
            "user_id": user, "day": day, "bedtime_start": start, "bedtime_end": end,
            "total_sleep_duration": total, "time_in_bed": total + 1800, "efficiency": 90,
            "sleep_score": score, "readiness_score": 75, "average_hrv": 45.0,
            "lowest_heart_rate": 52.0, "average_breath": 14.5
        })
        .to_string()
    }

    fn night(day: u32, total: u64, score: u8) -> String {
        sleep_line(
            "u1",
            &format!("2024-07-{day:02}"),
            &format!("2024-07-{:02}T23:30:00-04:00", day - 1),
            &format!("2024-07-{day:02}T07:30:00-04:00"),
            total,
            score,
        )
    }

    #[test]
    fn ingest_counts_and_idempotency() {
        let mut store = Datastore::new("u1".into());
        let text = [night(24, 25000, 80), night(25, 26000, 82), night(26, 24000, 78)].join("\n");
        let report = store.ingest_lines(&text);
        assert_eq!(report.sleep, 3);
        assert!(report.errors.is_empty());
        assert_eq!(report.new_sleep.len(), 3);

        let again = store.ingest_lines(&night(25, 26000, 82));
        assert_eq!(again.sleep, 1);
        assert!(again.new_sleep.is_empty());
        assert_eq!(store.counts().0, 3);
    }

    #[test]
    fn malformed_line_reported_with_number() {
        let mut store = Datastore::new("u1".into());
        let text = [night(24, 25000, 80), "{not json".to_string(), night(25, 26000, 0), night(26, 24000, 78)].join("\n");
        let report = store.ingest_lines(&text);
        assert_eq!(report.sleep, 2);
        let lines: Vec<usize> = report.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3]);
        assert_eq!(store.counts().0, 2);
    }

    #[test]
    fn foreign_user_rejected() {
        let mut store = Datastore::new("u1".into());
        let line = sleep_line("u2", "2024-07-26", "2024-07-25T23:00:00-04:00", "2024-07-26T07:00:00-04:00", 25000, 80);
        let report = store.ingest_lines(&line);
        assert_eq!(report.errors.len(), 1);
        assert!(report.errors[0].message.contains("u2"));
    }

    #[test]
    fn activity_and_physio_lines() {
        let mut store = Datastore::new("u1".into());
        let text = [
            r#"{"user_id":"u1","day":"2024-07-26","activity_type":"Walking","intensity":"easy","start_time":"2024-07-26T17:00:00-04:00","end_time":"2024-07-26T17:30:00-04:00"}"#,
            r#"{"user_id":"u1","day":"2024-07-26","average_heart_rate":61.0,"lowest_heart_rate":50.0,"average_hrv":44.0,"stress_level":35}"#,
            r#"{"user_id":"u1","day":"2024-07-26","mystery":1}"#,
        ]
        .join("\n");
        let report = store.ingest_lines(&text);
        assert_eq!((report.activity, report.physio), (1, 1));
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].line, 3);
    }

    #[test]
    fn longest_sleep_prefers_main_sleep_over_nap() {
        let mut store = Datastore::new("u1".into());
        let nap = sleep_line("u1", "2024-07-26", "2024-07-26T14:00:00-04:00", "2024-07-26T14:40:00-04:00", 1800, 60);
        store.ingest_lines(&[night(26, 25000, 80), nap].join("\n"));
        let day = NaiveDate::from_ymd_opt(2024, 7, 26).unwrap();
        assert_eq!(store.longest_sleep_for_day(day).unwrap().total_sleep_seconds, 25000);
        assert!(matches!(
            store.longest_sleep_for_day(NaiveDate::from_ymd_opt(2024, 7, 1).unwrap()),
            Err(DatastoreError::Unavailable)
        ));
    }

    #[test]
    fn single_record_is_its_own_longest() {
        let mut store = Datastore::new("u1".into());
        store.ingest_lines(&night(26, 25000, 80));
        let day = NaiveDate::from_ymd_opt(2024, 7, 26).unwrap();
        assert_eq!(store.longest_sleep_for_day(day).unwrap().sleep_score, 80);
    }

    #[test]
    fn flush_and_reopen_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("users/u1/store.log");
        let mut store = Datastore::open("u1".into(), &path).unwrap();
        store.ingest_lines(&[night(25, 26000, 82), night(24, 25000, 80)].join("\n"));
        store.flush().unwrap();
        let reopened = Datastore::open("u1".into(), &path).unwrap();
        assert_eq!(reopened, store);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), store.to_lines());
    }

    #[test]
    fn unavailable_message_is_verbatim() {
        assert_eq!(DatastoreError::Unavailable.to_string(), UNAVAILABLE_MESSAGE);
    }
}
