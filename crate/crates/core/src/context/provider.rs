use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::{ContextError, TempThresholds};
use crate::domain::{ContextSnapshot, Timestamp};

/// Weather API response, reduced to the fields we read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherPayload {
    pub location: PayloadLocation,
    pub current: PayloadCurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadLocation {
    #[serde(default)]
    pub name: Option<String>,
    pub localtime: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadCurrent {
    pub temp_c: f64,
    pub condition: PayloadCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadCondition {
    pub text: String,
}

impl WeatherPayload {
    pub fn into_snapshot(self, location: &str, now: Timestamp) -> Result<ContextSnapshot, ContextError> {
        let local = NaiveDateTime::parse_from_str(self.location.localtime.trim(), "%Y-%m-%d %H:%M")
            .map_err(|e| ContextError::Payload(format!("location.localtime `{}`: {e}", self.location.localtime)))?;
        if !self.current.temp_c.is_finite() {
            return Err(ContextError::NonFinite);
        }
        Ok(ContextSnapshot {
            local_hour: local.hour() as u8,
            temperature_c: self.current.temp_c,
            weather_condition: self.current.condition.text,
            location_label: Some(self.location.name.unwrap_or_else(|| location.to_string())),
            captured_at: now,
            degraded: false,
        })
    }
}

pub trait WeatherProvider: Send + Sync {
    fn current(&self, location: &str, now: Timestamp) -> Result<ContextSnapshot, ContextError>;
}

/// Reads a stored provider response from disk on every call.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    path: PathBuf,
}

impl FixtureProvider {
    pub fn new(path: impl AsRef<Path>) -> Self {
        Self {
            path: path.as_ref().to_path_buf(),
        }
    }
}

impl WeatherProvider for FixtureProvider {
    fn current(&self, location: &str, now: Timestamp) -> Result<ContextSnapshot, ContextError> {
        let text = std::fs::read_to_string(&self.path)
            .map_err(|e| ContextError::ProviderUnavailable(format!("{}: {e}", self.path.display())))?;
        let payload: WeatherPayload =
            serde_json::from_str(&text).map_err(|e| ContextError::Payload(e.to_string()))?;
        payload.into_snapshot(location, now)
    }
}

/// Always fails; used when no weather source is configured.
#[derive(Debug, Clone, Default)]
pub struct UnavailableProvider;

impl WeatherProvider for UnavailableProvider {
    fn current(&self, _location: &str, _now: Timestamp) -> Result<ContextSnapshot, ContextError> {
        Err(ContextError::ProviderUnavailable("no weather provider configured".into()))
    }
}

pub const DEFAULT_WEATHER_URL: &str = "https://api.weatherapi.com/v1/current.json";

/// `GET <base_url>?key=<key>&q=<location>`.
#[derive(Debug, Clone)]
pub struct HttpWeatherProvider {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpWeatherProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            agent,
        }
    }

    /// Reads the key from `WEATHER_API_KEY`.
    pub fn from_env(base_url: impl Into<String>, timeout: Duration) -> Result<Self, ContextError> {
        let key = std::env::var("WEATHER_API_KEY")
            .map_err(|_| ContextError::ProviderUnavailable("WEATHER_API_KEY is not set".into()))?;
        Ok(Self::new(base_url, key, timeout))
    }
}

impl WeatherProvider for HttpWeatherProvider {
    fn current(&self, location: &str, now: Timestamp) -> Result<ContextSnapshot, ContextError> {
        let mut response = self
            .agent
            .get(&self.base_url)
            .query("key", &self.api_key)
            .query("q", location)
            .call()
            .map_err(|e| ContextError::ProviderUnavailable(e.to_string()))?;
        let payload: WeatherPayload = response
            .body_mut()
            .read_json()
            .map_err(|e| ContextError::Payload(e.to_string()))?;
        payload.into_snapshot(location, now)
    }
}

pub fn fetch_context(
    location: &str,
    provider: &dyn WeatherProvider,
    now: Timestamp,
) -> Result<ContextSnapshot, ContextError> {
    provider.current(location, now)
}

/// Like [`fetch_context`], but any provider failure yields a degraded
/// snapshot: real local hour, a mild temperature and clear weather.
pub fn fetch_context_or_degraded(
    location: &str,
    provider: &dyn WeatherProvider,
    now: Timestamp,
    thresholds: &TempThresholds,
) -> ContextSnapshot {
    match provider.current(location, now) {
        Ok(snapshot) => snapshot,
        Err(err) => {
            tracing::warn!(%err, "weather lookup failed, using degraded context");
            ContextSnapshot {
                local_hour: now.hour() as u8,
                temperature_c: (thresholds.mild_from + thresholds.warm_from) / 2.0,
                weather_condition: "clear".into(),
                location_label: Some(location.to_string()),
                captured_at: now,
                degraded: true,
            }
        }
    }
}
