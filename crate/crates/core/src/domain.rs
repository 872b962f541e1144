//! Wearable records, context snapshots, recommendations and conversation types.
//!
//! Raw ingestion records (`Raw*`) mirror the JSON-lines format field for field
//! and are turned into validated values with the `validate_*` functions. The
//! validated types never hold out-of-range scores or inverted time intervals.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::TechniqueDomain;
use crate::context::ContextVector;

pub type Timestamp = DateTime<FixedOffset>;

/// Opaque user identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` = {value} outside {min}..={max}")]
    Range {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("ordering violated: {0}")]
    Order(String),
    #[error("field `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

impl ValidationError {
    fn range(field: &'static str, value: f64, min: f64, max: f64) -> Self {
        Self::Range {
            field,
            value,
            min,
            max,
        }
    }
}

/// One night (or nap) of sleep. `day` is the calendar date of `bedtime_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepRecord {
    pub user_id: UserId,
    pub day: NaiveDate,
    pub bedtime_start: Timestamp,
    pub bedtime_end: Timestamp,
    pub total_sleep_seconds: u64,
    pub time_in_bed_seconds: u64,
    pub sleep_efficiency: u8,
    pub sleep_score: u8,
    pub readiness_score: u8,
    pub average_hrv_ms: f64,
    pub lowest_heart_rate_bpm: f64,
    pub average_breath: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Easy,
    Moderate,
    Hard,
}

impl std::str::FromStr for Intensity {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Self::Easy),
            "moderate" => Ok(Self::Moderate),
            "hard" => Ok(Self::Hard),
            other => Err(ValidationError::Invalid {
                field: "intensity",
                message: format!("unknown intensity `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub user_id: UserId,
    pub day: NaiveDate,
    pub activity_type: String,
    pub intensity: Intensity,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
}

impl ActivityRecord {
    pub fn duration_seconds(&self) -> i64 {
        (self.end_time - self.start_time).num_seconds()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysioSample {
    pub user_id: UserId,
    pub day: NaiveDate,
    pub average_heart_rate_bpm: f64,
    pub lowest_heart_rate_bpm: f64,
    pub average_hrv_ms: f64,
    pub stress_level: u8,
}

/// Sleep line of the ingestion format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawSleep {
    pub user_id: Option<String>,
    pub day: Option<NaiveDate>,
    pub bedtime_start: Option<Timestamp>,
    pub bedtime_end: Option<Timestamp>,
    pub total_sleep_duration: Option<i64>,
    pub time_in_bed: Option<i64>,
    pub efficiency: Option<i64>,
    pub sleep_score: Option<i64>,
    pub readiness_score: Option<i64>,
    pub average_hrv: Option<f64>,
    pub lowest_heart_rate: Option<f64>,
    pub average_breath: Option<f64>,
}

/// Activity line of the ingestion format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawActivity {
    pub user_id: Option<String>,
    pub day: Option<NaiveDate>,
    pub activity_type: Option<String>,
    pub intensity: Option<String>,
    pub start_time: Option<Timestamp>,
    pub end_time: Option<Timestamp>,
}

/// Physiological line of the ingestion format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawPhysio {
    pub user_id: Option<String>,
    pub day: Option<NaiveDate>,
    pub average_heart_rate: Option<f64>,
    pub lowest_heart_rate: Option<f64>,
    pub average_hrv: Option<f64>,
    pub stress_level: Option<i64>,
}

fn required<T>(value: Option<T>, field: &'static str) -> Result<T, ValidationError> {
    value.ok_or(ValidationError::MissingField(field))
}

fn score(value: i64, field: &'static str) -> Result<u8, ValidationError> {
    if (1..=100).contains(&value) {
        Ok(value as u8)
    } else {
        Err(ValidationError::range(field, value as f64, 1.0, 100.0))
    }
}

fn seconds(value: i64, field: &'static str) -> Result<u64, ValidationError> {
    u64::try_from(value).map_err(|_| ValidationError::range(field, value as f64, 0.0, f64::INFINITY))
}

fn non_negative(value: f64, field: &'static str) -> Result<f64, ValidationError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ValidationError::range(field, value, 0.0, f64::INFINITY))
    }
}

fn positive(value: f64, field: &'static str) -> Result<f64, ValidationError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ValidationError::range(field, value, f64::MIN_POSITIVE, f64::INFINITY))
    }
}

fn user(value: Option<String>) -> Result<UserId, ValidationError> {
    let id = required(value, "user_id")?;
    if id.trim().is_empty() {
        return Err(ValidationError::Invalid {
            field: "user_id",
            message: "empty".into(),
        });
    }
    Ok(UserId(id))
}

pub fn validate_sleep_record(raw: RawSleep) -> Result<SleepRecord, ValidationError> {
    let user_id = user(raw.user_id)?;
    let day = required(raw.day, "day")?;
    let bedtime_start = required(raw.bedtime_start, "bedtime_start")?;
    let bedtime_end = required(raw.bedtime_end, "bedtime_end")?;
    let total = seconds(required(raw.total_sleep_duration, "total_sleep_duration")?, "total_sleep_duration")?;
    let in_bed = seconds(required(raw.time_in_bed, "time_in_bed")?, "time_in_bed")?;
    let sleep_efficiency = score(required(raw.efficiency, "efficiency")?, "efficiency")?;
    let sleep_score = score(required(raw.sleep_score, "sleep_score")?, "sleep_score")?;
    let readiness_score = score(required(raw.readiness_score, "readiness_score")?, "readiness_score")?;
    let average_hrv_ms = non_negative(required(raw.average_hrv, "average_hrv")?, "average_hrv")?;
    let lowest_heart_rate_bpm = positive(required(raw.lowest_heart_rate, "lowest_heart_rate")?, "lowest_heart_rate")?;
    let average_breath = positive(required(raw.average_breath, "average_breath")?, "average_breath")?;

    if bedtime_start >= bedtime_end {
        return Err(ValidationError::Order(format!(
            "bedtime_start {bedtime_start} is not before bedtime_end {bedtime_end}"
        )));
    }
    if total > in_bed {
        return Err(ValidationError::Order(format!(
            "total_sleep_duration {total} exceeds time_in_bed {in_bed}"
        )));
    }
    // Wake-up day rule.
    if bedtime_end.date_naive() != day {
        return Err(ValidationError::Order(format!(
            "day {day} does not match the date of bedtime_end {}",
            bedtime_end.date_naive()
        )));
    }

    Ok(SleepRecord {
        user_id,
        day,
        bedtime_start,
        bedtime_end,
        total_sleep_seconds: total,
        time_in_bed_seconds: in_bed,
        sleep_efficiency,
        sleep_score,
        readiness_score,
        average_hrv_ms,
        lowest_heart_rate_bpm,
        average_breath,
    })
}

pub fn validate_activity_record(raw: RawActivity) -> Result<ActivityRecord, ValidationError> {
    let user_id = user(raw.user_id)?;
    let day = required(raw.day, "day")?;
    let activity_type = required(raw.activity_type, "activity_type")?;
    if activity_type.trim().is_empty() {
        return Err(ValidationError::Invalid {
            field: "activity_type",
            message: "empty".into(),
        });
    }
    let intensity: Intensity = required(raw.intensity, "intensity")?.parse()?;
    let start_time = required(raw.start_time, "start_time")?;
    let end_time = required(raw.end_time, "end_time")?;
    if start_time >= end_time {
        return Err(ValidationError::Order(format!(
            "start_time {start_time} is not before end_time {end_time}"
        )));
    }
    Ok(ActivityRecord {
        user_id,
        day,
        activity_type,
        intensity,
        start_time,
        end_time,
    })
}

pub fn validate_physio_sample(raw: RawPhysio) -> Result<PhysioSample, ValidationError> {
    let user_id = user(raw.user_id)?;
    let day = required(raw.day, "day")?;
    let average_heart_rate_bpm = positive(required(raw.average_heart_rate, "average_heart_rate")?, "average_heart_rate")?;
    let lowest_heart_rate_bpm = positive(required(raw.lowest_heart_rate, "lowest_heart_rate")?, "lowest_heart_rate")?;
    let average_hrv_ms = non_negative(required(raw.average_hrv, "average_hrv")?, "average_hrv")?;
    let stress_level = score(required(raw.stress_level, "stress_level")?, "stress_level")?;
    if lowest_heart_rate_bpm > average_heart_rate_bpm {
        return Err(ValidationError::Order(format!(
            "lowest_heart_rate {lowest_heart_rate_bpm} exceeds average_heart_rate {average_heart_rate_bpm}"
        )));
    }
    Ok(PhysioSample {
        user_id,
        day,
        average_heart_rate_bpm,
        lowest_heart_rate_bpm,
        average_hrv_ms,
        stress_level,
    })
}

impl From<&SleepRecord> for RawSleep {
    fn from(r: &SleepRecord) -> Self {
        Self {
            user_id: Some(r.user_id.0.clone()),
            day: Some(r.day),
            bedtime_start: Some(r.bedtime_start),
            bedtime_end: Some(r.bedtime_end),
            total_sleep_duration: Some(r.total_sleep_seconds as i64),
            time_in_bed: Some(r.time_in_bed_seconds as i64),
            efficiency: Some(r.sleep_efficiency.into()),
            sleep_score: Some(r.sleep_score.into()),
            readiness_score: Some(r.readiness_score.into()),
            average_hrv: Some(r.average_hrv_ms),
            lowest_heart_rate: Some(r.lowest_heart_rate_bpm),
            average_breath: Some(r.average_breath),
        }
    }
}

impl From<&ActivityRecord> for RawActivity {
    fn from(r: &ActivityRecord) -> Self {
        let intensity = match r.intensity {
            Intensity::Easy => "easy",
            Intensity::Moderate => "moderate",
            Intensity::Hard => "hard",
        };
        Self {
            user_id: Some(r.user_id.0.clone()),
            day: Some(r.day),
            activity_type: Some(r.activity_type.clone()),
            intensity: Some(intensity.into()),
            start_time: Some(r.start_time),
            end_time: Some(r.end_time),
        }
    }
}

impl From<&PhysioSample> for RawPhysio {
    fn from(r: &PhysioSample) -> Self {
        Self {
            user_id: Some(r.user_id.0.clone()),
            day: Some(r.day),
            average_heart_rate: Some(r.average_heart_rate_bpm),
            lowest_heart_rate: Some(r.lowest_heart_rate_bpm),
            average_hrv: Some(r.average_hrv_ms),
            stress_level: Some(r.stress_level.into()),
        }
    }
}

/// Environmental context at recommendation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSnapshot {
    pub local_hour: u8,
    pub temperature_c: f64,
    pub weather_condition: String,
    pub location_label: Option<String>,
    pub captured_at: Timestamp,
    /// Set when the weather provider was unreachable and temperature/weather
    /// are placeholders.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecId(pub String);

impl fmt::Display for RecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Bandit arm reference: label plus position in the model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArmId {
    pub name: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub rec_id: RecId,
    pub user_id: UserId,
    pub arm: ArmId,
    pub context_vector: ContextVector,
    pub issued_at: Timestamp,
    pub tailored_text: String,
    pub reward_attributed: bool,
    pub degraded_context: bool,
}

impl Recommendation {
    /// Flips `reward_attributed`; returns false if it was already set.
    pub fn mark_attributed(&mut self) -> bool {
        !std::mem::replace(&mut self.reward_attributed, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRoute {
    DataInsight,
    Recommendation,
    TechniqueOnly,
    Direct,
}

impl AgentRoute {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DataInsight => "data_insight",
            Self::Recommendation => "recommendation",
            Self::TechniqueOnly => "technique_only",
            Self::Direct => "direct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    pub timestamp: Timestamp,
    #[serde(default)]
    pub routes_taken: BTreeSet<AgentRoute>,
    #[serde(default)]
    pub techniques_used: Vec<TechniqueDomain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rec_id: Option<RecId>,
}

impl ChatTurn {
    pub fn user(text: impl Into<String>, timestamp: Timestamp) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            timestamp,
            routes_taken: BTreeSet::new(),
            techniques_used: Vec::new(),
            rec_id: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    HealthGuru,
    Baseline,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "healthguru" => Ok(Self::HealthGuru),
            "baseline" => Ok(Self::Baseline),
            other => Err(format!("unknown mode `{other}` (expected healthguru or baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("turn at {new} is not after the previous turn at {last}")]
    OutOfOrder { last: Timestamp, new: Timestamp },
    #[error("user turns cannot carry routes")]
    UserTurnWithRoutes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub user_id: UserId,
    pub mode: Mode,
    pub turns: Vec<ChatTurn>,
    pub created_at: Timestamp,
}

impl Session {
    pub fn new(user_id: UserId, mode: Mode, created_at: Timestamp) -> Self {
        Self {
            user_id,
            mode,
            turns: Vec::new(),
            created_at,
        }
    }

    /// Appends a turn, keeping timestamps strictly increasing.
    pub fn push(&mut self, turn: ChatTurn) -> Result<(), SessionError> {
        if turn.role == Role::User && !turn.routes_taken.is_empty() {
            return Err(SessionError::UserTurnWithRoutes);
        }
        if let Some(last) = self.turns.last() {
            if turn.timestamp <= last.timestamp {
                return Err(SessionError::OutOfOrder {
                    last: last.timestamp,
                    new: turn.timestamp,
                });
            }
        }
        self.turns.push(turn);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    fn raw_sleep() -> RawSleep {
        RawSleep {
            user_id: Some("u1".into()),
            day: Some(NaiveDate::from_ymd_opt(2024, 7, 26).unwrap()),
            bedtime_start: Some(ts("2024-07-26T00:26:28-04:00")),
            bedtime_end: Some(ts("2024-07-26T07:56:28-04:00")),
            total_sleep_duration: Some(24480),
            time_in_bed: Some(27000),
            efficiency: Some(91),
            sleep_score: Some(82),
            readiness_score: Some(77),
            average_hrv: Some(48.0),
            lowest_heart_rate: Some(52.0),
            average_breath: Some(14.6),
        }
    }

    #[test]
    fn valid_sleep_record() {
        let r = validate_sleep_record(raw_sleep()).unwrap();
        assert_eq!(r.total_sleep_seconds, 24480);
        assert_eq!(r.sleep_efficiency, 91);
    }

    #[test]
    fn sleep_longer_than_bed_is_order_error() {
        let mut raw = raw_sleep();
        raw.total_sleep_duration = Some(30000);
        assert!(matches!(validate_sleep_record(raw), Err(ValidationError::Order(_))));
    }

    #[test]
    fn zero_sleep_score_is_range_error() {
        let mut raw = raw_sleep();
        raw.sleep_score = Some(0);
        assert!(matches!(
            validate_sleep_record(raw),
            Err(ValidationError::Range { field: "sleep_score", .. })
        ));
    }

    #[test]
    fn inverted_bedtime_is_order_error() {
        let mut raw = raw_sleep();
        raw.bedtime_start = Some(ts("2024-07-26T08:00:00-04:00"));
        assert!(matches!(validate_sleep_record(raw), Err(ValidationError::Order(_))));
    }

    #[test]
    fn missing_field_reported_by_name() {
        let mut raw = raw_sleep();
        raw.readiness_score = None;
        assert_eq!(
            validate_sleep_record(raw),
            Err(ValidationError::MissingField("readiness_score"))
        );
    }

    #[test]
    fn day_must_be_wake_up_date() {
        let mut raw = raw_sleep();
        raw.day = Some(NaiveDate::from_ymd_opt(2024, 7, 25).unwrap());
        assert!(matches!(validate_sleep_record(raw), Err(ValidationError::Order(_))));
    }

    #[test]
    fn activity_validation() {
        let raw = RawActivity {
            user_id: Some("u1".into()),
            day: Some(NaiveDate::from_ymd_opt(2024, 7, 26).unwrap()),
            activity_type: Some("Walking".into()),
            intensity: Some("Moderate".into()),
            start_time: Some(ts("2024-07-26T17:00:00-04:00")),
            end_time: Some(ts("2024-07-26T17:40:00-04:00")),
        };
        let rec = validate_activity_record(raw.clone()).unwrap();
        assert_eq!(rec.intensity, Intensity::Moderate);
        assert_eq!(rec.duration_seconds(), 2400);

        let mut bad = raw.clone();
        bad.intensity = Some("extreme".into());
        assert!(validate_activity_record(bad).is_err());

        let mut inverted = raw;
        inverted.end_time = inverted.start_time;
        assert!(matches!(validate_activity_record(inverted), Err(ValidationError::Order(_))));
    }

    #[test]
    fn physio_lowest_above_average_rejected() {
        let raw = RawPhysio {
            user_id: Some("u1".into()),
            day: Some(NaiveDate::from_ymd_opt(2024, 7, 26).unwrap()),
            average_heart_rate: Some(55.0),
            lowest_heart_rate: Some(60.0),
            average_hrv: Some(40.0),
            stress_level: Some(30),
        };
        assert!(matches!(validate_physio_sample(raw), Err(ValidationError::Order(_))));
    }

    #[test]
    fn session_rejects_out_of_order_turns() {
        let t0 = ts("2024-07-26T10:00:00-04:00");
        let mut s = Session::new("u1".into(), Mode::HealthGuru, t0);
        s.push(ChatTurn::user("hi", t0)).unwrap();
        assert!(s.push(ChatTurn::user("again", t0)).is_err());
        assert_eq!(s.turns.len(), 1);
    }

    #[test]
    fn attribution_flag_flips_once() {
        let mut rec = Recommendation {
            rec_id: RecId("r1".into()),
            user_id: "u1".into(),
            arm: ArmId { name: "walking".into(), index: 1 },
            context_vector: ContextVector::from_indices(0, 0, 0),
            issued_at: ts("2024-07-26T10:00:00-04:00"),
            tailored_text: String::new(),
            reward_attributed: false,
            degraded_context: false,
        };
        assert!(rec.mark_attributed());
        assert!(!rec.mark_attributed());
    }
}
