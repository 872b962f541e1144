//! Context discretization: hour, temperature and weather condition become a
//! 16-dimensional one-hot vector (7 time bins, 4 temperature bins, 5 weather
//! bins, concatenated in that order).

mod provider;

pub use provider::{
    fetch_context, fetch_context_or_degraded, FixtureProvider, HttpWeatherProvider, UnavailableProvider,
    WeatherPayload, WeatherProvider, DEFAULT_WEATHER_URL,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ContextSnapshot;

pub const TIME_BINS: usize = 7;
pub const TEMP_BINS: usize = 4;
pub const WEATHER_BINS: usize = 5;
/// Length of a context vector.
pub const CONTEXT_DIM: usize = TIME_BINS + TEMP_BINS + WEATHER_BINS;

const TEMP_OFFSET: usize = TIME_BINS;
const WEATHER_OFFSET: usize = TIME_BINS + TEMP_BINS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContextError {
    #[error("hour {0} outside 0..=23")]
    Range(i64),
    #[error("temperature is not a finite number")]
    NonFinite,
    #[error("weather provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed provider payload: {0}")]
    Payload(String),
    #[error("invalid temperature thresholds: {0}")]
    Thresholds(String),
}

/// Hour interval index over [0,6) [6,9) [9,12) [12,15) [15,18) [18,21) [21,24).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeBin(u8);

impl TimeBin {
    const LABELS: [&'static str; TIME_BINS] = ["0-6", "6-9", "9-12", "12-15", "15-18", "18-21", "21-24"];

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> &'static str {
        Self::LABELS[self.index()]
    }

    /// Phrase used when tailoring recommendation text.
    pub fn phrase(self) -> &'static str {
        match self.0 {
            0 => "in the early hours",
            1 => "this morning",
            2 => "later this morning",
            3 => "around midday",
            4 => "this afternoon",
            5 => "this evening",
            _ => "tonight",
        }
    }
}

pub fn bin_time(local_hour: i64) -> Result<TimeBin, ContextError> {
    let idx = match local_hour {
        0..=5 => 0,
        6..=8 => 1,
        9..=11 => 2,
        12..=14 => 3,
        15..=17 => 4,
        18..=20 => 5,
        21..=23 => 6,
        other => return Err(ContextError::Range(other)),
    };
    Ok(TimeBin(idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TempBin {
    Cold,
    Mild,
    Warm,
    Hot,
}

impl TempBin {
    pub const ALL: [TempBin; TEMP_BINS] = [Self::Cold, Self::Mild, Self::Warm, Self::Hot];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Cold => "cold",
            Self::Mild => "mild",
            Self::Warm => "warm",
            Self::Hot => "hot",
        }
    }
}

/// Lower edges (°C) of the mild, warm and hot bins. Each edge belongs to the
/// upper bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempThresholds {
    pub mild_from: f64,
    pub warm_from: f64,
    pub hot_from: f64,
}

impl Default for TempThresholds {
    fn default() -> Self {
        Self {
            mild_from: 10.0,
            warm_from: 20.0,
            hot_from: 28.0,
        }
    }
}

impl TempThresholds {
    pub fn new(mild_from: f64, warm_from: f64, hot_from: f64) -> Result<Self, ContextError> {
        let t = Self {
            mild_from,
            warm_from,
            hot_from,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        let edges = [self.mild_from, self.warm_from, self.hot_from];
        if edges.iter().any(|e| !e.is_finite()) || !(self.mild_from < self.warm_from && self.warm_from < self.hot_from) {
            return Err(ContextError::Thresholds(format!(
                "edges must be finite and strictly increasing, got {edges:?}"
            )));
        }
        Ok(())
    }
}

pub fn bin_temperature(celsius: f64, thresholds: &TempThresholds) -> Result<TempBin, ContextError> {
    if !celsius.is_finite() {
        return Err(ContextError::NonFinite);
    }
    Ok(if celsius < thresholds.mild_from {
        TempBin::Cold
    } else if celsius < thresholds.warm_from {
        TempBin::Mild
    } else if celsius < thresholds.hot_from {
        TempBin::Warm
    } else {
        TempBin::Hot
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherBin {
    Sunny,
    Rain,
    Clear,
    Windy,
    Snow,
}

impl WeatherBin {
    pub const ALL: [WeatherBin; WEATHER_BINS] = [Self::Sunny, Self::Rain, Self::Clear, Self::Windy, Self::Snow];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Sunny => "sunny",
            Self::Rain => "rain",
            Self::Clear => "clear",
            Self::Windy => "windy",
            Self::Snow => "snow",
        }
    }

    /// Adjective form for recommendation text ("Given it's rainy ...").
    pub fn describe(self) -> &'static str {
        match self {
            Self::Sunny => "sunny",
            Self::Rain => "rainy",
            Self::Clear => "clear",
            Self::Windy => "windy",
            Self::Snow => "snowy",
        }
    }
}

/// Substring rules, checked in order; first hit wins, no hit means clear.
const WEATHER_SYNONYMS: &[(&str, WeatherBin)] = &[
    ("rain", WeatherBin::Rain),
    ("drizzle", WeatherBin::Rain),
    ("shower", WeatherBin::Rain),
    ("thunder", WeatherBin::Rain),
    ("snow", WeatherBin::Snow),
    ("sleet", WeatherBin::Snow),
    ("blizzard", WeatherBin::Snow),
    ("ice pellets", WeatherBin::Snow),
    ("wind", WeatherBin::Windy),
    ("gale", WeatherBin::Windy),
    ("sun", WeatherBin::Sunny),
];

pub fn map_weather(condition: &str) -> WeatherBin {
    let lower = condition.to_lowercase();
    WEATHER_SYNONYMS
        .iter()
        .find(|(needle, _)| lower.contains(needle))
        .map(|(_, bin)| *bin)
        .unwrap_or(WeatherBin::Clear)
}

/// One-hot context vector: indices 0..7 time, 7..11 temperature, 11..16 weather.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ContextVector {
    values: [f64; CONTEXT_DIM],
}

impl ContextVector {
    pub fn from_indices(time: usize, temp: usize, weather: usize) -> Self {
        assert!(time < TIME_BINS && temp < TEMP_BINS && weather < WEATHER_BINS);
        let mut values = [0.0; CONTEXT_DIM];
        values[time] = 1.0;
        values[TEMP_OFFSET + temp] = 1.0;
        values[WEATHER_OFFSET + weather] = 1.0;
        Self { values }
    }

    pub fn from_bins(time: TimeBin, temp: TempBin, weather: WeatherBin) -> Self {
        Self::from_indices(time.index(), temp.index(), weather.index())
    }

    /// Decodes the flat context index used by the simulator
    /// (`time * 20 + temp * 5 + weather`, 140 values).
    pub fn from_flat_index(idx: usize) -> Self {
        assert!(idx < TIME_BINS * TEMP_BINS * WEATHER_BINS);
        let time = idx / (TEMP_BINS * WEATHER_BINS);
        let temp = (idx / WEATHER_BINS) % TEMP_BINS;
        let weather = idx % WEATHER_BINS;
        Self::from_indices(time, temp, weather)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn ones(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == 1.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    fn group_index(&self, range: std::ops::Range<usize>) -> usize {
        let start = range.start;
        self.values[range]
            .iter()
            .position(|v| *v == 1.0)
            .expect("one-hot invariant")
            + start
    }

    pub fn time_bin(&self) -> TimeBin {
        TimeBin(self.group_index(0..TEMP_OFFSET) as u8)
    }

    pub fn temp_bin(&self) -> TempBin {
        TempBin::ALL[self.group_index(TEMP_OFFSET..WEATHER_OFFSET) - TEMP_OFFSET]
    }

    pub fn weather_bin(&self) -> WeatherBin {
        WeatherBin::ALL[self.group_index(WEATHER_OFFSET..CONTEXT_DIM) - WEATHER_OFFSET]
    }
}

impl From<ContextVector> for Vec<f64> {
    fn from(v: ContextVector) -> Self {
        v.values.to_vec()
    }
}

impl TryFrom<Vec<f64>> for ContextVector {
    type Error = String;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let values: [f64; CONTEXT_DIM] = v
            .try_into()
            .map_err(|v: Vec<f64>| format!("context vector must have {CONTEXT_DIM} entries, got {}", v.len()))?;
        if values.iter().any(|x| *x != 0.0 && *x != 1.0) {
            return Err("context vector entries must be 0 or 1".into());
        }
        let count = |r: std::ops::Range<usize>| values[r].iter().filter(|x| **x == 1.0).count();
        if count(0..TEMP_OFFSET) != 1 || count(TEMP_OFFSET..WEATHER_OFFSET) != 1 || count(WEATHER_OFFSET..CONTEXT_DIM) != 1 {
            return Err("context vector must be one-hot within each group".into());
        }
        Ok(Self { values })
    }
}

pub fn featurize(snapshot: &ContextSnapshot, thresholds: &TempThresholds) -> Result<ContextVector, ContextError> {
    let time = bin_time(snapshot.local_hour.into())?;
    let temp = bin_temperature(snapshot.temperature_c, thresholds)?;
    let weather = map_weather(&snapshot.weather_condition);
    Ok(ContextVector::from_bins(time, temp, weather))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::DateTime;

    fn snap(hour: u8, temp: f64, cond: &str) -> ContextSnapshot {
        ContextSnapshot {
            local_hour: hour,
            temperature_c: temp,
            weather_condition: cond.into(),
            location_label: None,
            captured_at: DateTime::parse_from_rfc3339("2024-07-26T07:00:00-04:00").unwrap(),
            degraded: false,
        }
    }

    #[test]
    fn time_bins() {
        assert_eq!(bin_time(0).unwrap().index(), 0);
        assert_eq!(bin_time(6).unwrap().index(), 1);
        assert_eq!(bin_time(23).unwrap().index(), 6);
        assert_eq!(bin_time(24), Err(ContextError::Range(24)));
        assert_eq!(bin_time(-1), Err(ContextError::Range(-1)));
    }

    #[test]
    fn temperature_bins() {
        let t = TempThresholds::default();
        assert_eq!(bin_temperature(15.0, &t).unwrap(), TempBin::Mild);
        assert_eq!(bin_temperature(10.0, &t).unwrap(), TempBin::Mild);
        assert_eq!(bin_temperature(35.0, &t).unwrap(), TempBin::Hot);
        assert_eq!(bin_temperature(-40.0, &t).unwrap(), TempBin::Cold);
        assert_eq!(bin_temperature(f64::NAN, &t), Err(ContextError::NonFinite));
        assert_eq!(bin_temperature(f64::INFINITY, &t), Err(ContextError::NonFinite));
    }

    #[test]
    fn thresholds_must_increase() {
        assert!(TempThresholds::new(10.0, 10.0, 28.0).is_err());
        assert!(TempThresholds::new(5.0, 15.0, 25.0).is_ok());
    }

    #[test]
    fn weather_synonyms() {
        assert_eq!(map_weather("Sunny"), WeatherBin::Sunny);
        assert_eq!(map_weather("Patchy light drizzle"), WeatherBin::Rain);
        assert_eq!(map_weather("Overcast"), WeatherBin::Clear);
        assert_eq!(map_weather("Light sleet"), WeatherBin::Snow);
        assert_eq!(map_weather("WINDY"), WeatherBin::Windy);
        assert_eq!(map_weather(""), WeatherBin::Clear);
    }

    #[test]
    fn featurize_layout() {
        let t = TempThresholds::default();
        assert_eq!(featurize(&snap(7, 15.0, "Sunny"), &t).unwrap().ones(), vec![1, 8, 11]);
        assert_eq!(featurize(&snap(0, 5.0, "Snow"), &t).unwrap().ones(), vec![0, 7, 15]);
        let v = featurize(&snap(16, 27.2, "Light rain"), &t).unwrap();
        assert_eq!(v.squared_norm(), 3.0);
        assert_eq!(v.weather_bin(), WeatherBin::Rain);
        assert_eq!(v.temp_bin(), TempBin::Warm);
        assert_eq!(v.time_bin().index(), 4);
    }

    #[test]
    fn flat_index_covers_every_context_once() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..140 {
            let v = ContextVector::from_flat_index(i);
            assert!(seen.insert(v.ones()));
        }
    }

    #[test]
    fn vector_deserialization_checks_one_hot() {
        let good: ContextVector = serde_json::from_str(&serde_json::to_string(&ContextVector::from_indices(2, 1, 3)).unwrap()).unwrap();
        assert_eq!(good.ones(), vec![2, 8, 14]);
        let mut bad = vec![0.0; CONTEXT_DIM];
        bad[0] = 1.0;
        assert!(serde_json::from_str::<ContextVector>(&serde_json::to_string(&bad).unwrap()).is_err());
    }
}
