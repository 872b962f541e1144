use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Datastore, DatastoreError};
use crate::domain::UserId;
use crate::simkit::least_squares;

/// Inclusive calendar-day interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    /// The `days` days ending at `end` (inclusive).
    pub fn ending(end: NaiveDate, days: u32) -> Self {
        let start = end - chrono::Duration::days(i64::from(days.max(1)) - 1);
        Self { start, end }
    }

    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start <= day && day <= self.end
    }

    /// Number of days covered; zero when `end < start`.
    pub fn days(&self) -> usize {
        ((self.end - self.start).num_days() + 1).max(0) as usize
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} to {}", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SleepScore,
    TotalSleepDuration,
    TimeInBed,
    Efficiency,
    ReadinessScore,
    AverageHrv,
    LowestHeartRate,
    AverageBreath,
    AverageHeartRate,
    StressLevel,
    ActivityCount,
    ActivityMinutes,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Self::SleepScore,
        Self::TotalSleepDuration,
        Self::TimeInBed,
        Self::Efficiency,
        Self::ReadinessScore,
        Self::AverageHrv,
        Self::LowestHeartRate,
        Self::AverageBreath,
        Self::AverageHeartRate,
        Self::StressLevel,
        Self::ActivityCount,
        Self::ActivityMinutes,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Self::SleepScore => "sleep_score",
            Self::TotalSleepDuration => "total_sleep_duration",
            Self::TimeInBed => "time_in_bed",
            Self::Efficiency => "efficiency",
            Self::ReadinessScore => "readiness_score",
            Self::AverageHrv => "average_hrv",
            Self::LowestHeartRate => "lowest_heart_rate",
            Self::AverageBreath => "average_breath",
            Self::AverageHeartRate => "average_heart_rate",
            Self::StressLevel => "stress_level",
            Self::ActivityCount => "activity_count",
            Self::ActivityMinutes => "activity_minutes",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::SleepScore => "sleep score",
            Self::TotalSleepDuration => "sleep duration",
            Self::TimeInBed => "time in bed",
            Self::Efficiency => "sleep efficiency",
            Self::ReadinessScore => "readiness score",
            Self::AverageHrv => "average HRV",
            Self::LowestHeartRate => "lowest heart rate",
            Self::AverageBreath => "average breathing rate",
            Self::AverageHeartRate => "average heart rate",
            Self::StressLevel => "stress level",
            Self::ActivityCount => "activities",
            Self::ActivityMinutes => "activity time",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::SleepScore | Self::ReadinessScore | Self::StressLevel => "points",
            Self::TotalSleepDuration | Self::TimeInBed => "hours",
            Self::Efficiency => "%",
            Self::AverageHrv => "ms",
            Self::LowestHeartRate | Self::AverageHeartRate => "bpm",
            Self::AverageBreath => "breaths/min",
            Self::ActivityCount => "activities",
            Self::ActivityMinutes => "minutes",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Latest,
    Mean,
    Min,
    Max,
    Trend,
    ComparePeriods,
}

impl std::str::FromStr for Aggregate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "latest" => Self::Latest,
            "mean" => Self::Mean,
            "min" => Self::Min,
            "max" => Self::Max,
            "trend" => Self::Trend,
            "compare_periods" => Self::ComparePeriods,
            other => return Err(format!("unknown aggregate `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsQuery {
    pub user_id: UserId,
    pub metric: Metric,
    pub aggregate: Aggregate,
    pub range: DateRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_range: Option<DateRange>,
}

impl AnalyticsQuery {
    pub fn new(user_id: UserId, metric: Metric, aggregate: Aggregate, range: DateRange) -> Self {
        Self {
            user_id,
            metric,
            aggregate,
            range,
            compare_range: None,
        }
    }

    pub fn compare(user_id: UserId, metric: Metric, range: DateRange, other: DateRange) -> Self {
        Self {
            user_id,
            metric,
            aggregate: Aggregate::ComparePeriods,
            range,
            compare_range: Some(other),
        }
    }

    fn validate(&self) -> Result<(), DatastoreError> {
        let invalid = |m: &str| Err(DatastoreError::InvalidQuery(m.to_string()));
        if (self.aggregate == Aggregate::ComparePeriods) != self.compare_range.is_some() {
            return invalid("compare_range is required for compare_periods and only allowed there");
        }
        if self.range.days() == 0 || self.compare_range.is_some_and(|r| r.days() == 0) {
            return invalid("date range ends before it starts");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub label: String,
    pub value: f64,
    pub unit: String,
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let value = format!("{:.2}", self.value);
        let value = value.trim_end_matches('0').trim_end_matches('.');
        if self.unit == "%" {
            write!(f, "{}: {value}%", self.label)
        } else {
            write!(f, "{}: {value} {}", self.label, self.unit)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsResult {
    pub metric: Metric,
    pub aggregate: Aggregate,
    pub value: f64,
    pub unit: String,
    /// Days contributing to the value.
    pub n: usize,
    pub narrative_facts: Vec<Fact>,
}

const HOUR: f64 = 3600.0;

/// Per-day values of `metric` within `range`, in day order.
fn daily_series(store: &Datastore, metric: Metric, range: &DateRange) -> Vec<(NaiveDate, f64)> {
    use Metric::*;
    match metric {
        SleepScore | TotalSleepDuration | TimeInBed | Efficiency | ReadinessScore | AverageHrv | LowestHeartRate
        | AverageBreath => store
            .main_sleeps(range)
            .into_iter()
            .map(|r| {
                let v = match metric {
                    SleepScore => f64::from(r.sleep_score),
                    TotalSleepDuration => r.total_sleep_seconds as f64 / HOUR,
                    TimeInBed => r.time_in_bed_seconds as f64 / HOUR,
                    Efficiency => f64::from(r.sleep_efficiency),
                    ReadinessScore => f64::from(r.readiness_score),
                    AverageHrv => r.average_hrv_ms,
                    LowestHeartRate => r.lowest_heart_rate_bpm,
                    _ => r.average_breath,
                };
                (r.day, v)
            })
            .collect(),
        AverageHeartRate | StressLevel => store
            .physio_samples()
            .filter(|p| range.contains(p.day))
            .map(|p| {
                let v = if metric == StressLevel {
                    f64::from(p.stress_level)
                } else {
                    p.average_heart_rate_bpm
                };
                (p.day, v)
            })
            .collect(),
        ActivityCount | ActivityMinutes => {
            let mut per_day: Vec<(NaiveDate, f64)> = Vec::new();
            for a in store.activity_records().filter(|a| range.contains(a.day)) {
                let v = if metric == ActivityCount {
                    1.0
                } else {
                    a.duration_seconds() as f64 / 60.0
                };
                match per_day.last_mut() {
                    Some((d, total)) if *d == a.day => *total += v,
                    _ => per_day.push((a.day, v)),
                }
            }
            per_day
        }
    }
}

fn mean(values: &[(NaiveDate, f64)]) -> f64 {
    values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64
}

pub fn run_query(store: &Datastore, q: &AnalyticsQuery) -> Result<AnalyticsResult, DatastoreError> {
    q.validate()?;
    if &q.user_id != store.user_id() {
        return Err(DatastoreError::InvalidQuery(format!(
            "query for `{}` sent to the store of `{}`",
            q.user_id,
            store.user_id()
        )));
    }
    let series = daily_series(store, q.metric, &q.range);
    if series.is_empty() {
        return Err(DatastoreError::Unavailable);
    }
    let unit = q.metric.unit().to_string();
    let label = q.metric.label();
    let fact = |label: String, value: f64, unit: &str| Fact {
        label,
        value,
        unit: unit.to_string(),
    };
    let n = series.len();
    let (value, unit, facts) = match q.aggregate {
        Aggregate::Latest => {
            let (day, v) = *series.last().expect("non-empty");
            (v, unit.clone(), vec![fact(format!("{label} on {day}"), v, &unit)])
        }
        Aggregate::Mean => {
            let v = mean(&series);
            (v, unit.clone(), vec![fact(format!("average {label} ({})", q.range), v, &unit)])
        }
        Aggregate::Min | Aggregate::Max => {
            let pick = series
                .iter()
                .copied()
                .reduce(|a, b| match q.aggregate {
                    Aggregate::Min if b.1 < a.1 => b,
                    Aggregate::Max if b.1 > a.1 => b,
                    _ => a,
                })
                .expect("non-empty");
            let word = if q.aggregate == Aggregate::Min { "lowest" } else { "highest" };
            (pick.1, unit.clone(), vec![fact(format!("{word} {label} ({})", pick.0), pick.1, &unit)])
        }
        Aggregate::Trend => {
            let points: Vec<(f64, f64)> = series
                .iter()
                .map(|(d, v)| ((*d - q.range.start).num_days() as f64, *v))
                .collect();
            let (slope, _) = least_squares(&points).ok_or(DatastoreError::Unavailable)?;
            let per_day = format!("{unit}/day");
            (slope, per_day.clone(), vec![fact(format!("{label} trend ({})", q.range), slope, &per_day)])
        }
        Aggregate::ComparePeriods => {
            let other = q.compare_range.expect("validated");
            let other_series = daily_series(store, q.metric, &other);
            if other_series.is_empty() {
                return Err(DatastoreError::Unavailable);
            }
            let (a, b) = (mean(&series), mean(&other_series));
            (
                a - b,
                unit.clone(),
                vec![
                    fact(format!("average {label} ({})", q.range), a, &unit),
                    fact(format!("average {label} ({other})"), b, &unit),
                    fact("difference".into(), a - b, &unit),
                ],
            )
        }
    };
    Ok(AnalyticsResult {
        metric: q.metric,
        aggregate: q.aggregate,
        value,
        unit,
        n,
        narrative_facts: facts,
    })
}
