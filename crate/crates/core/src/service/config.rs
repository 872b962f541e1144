use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{DEFAULT_ALPHA, DEFAULT_ARMS};
use crate::context::{TempThresholds, DEFAULT_WEATHER_URL};
use crate::domain::Mode;
use crate::orchestrator::live::{DEFAULT_CHAT_URL, DEFAULT_MODEL, DEFAULT_MODERATION_URL};
use crate::orchestrator::DEFAULT_EXPIRY_HOURS;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{0} must be set when its provider is live")]
    MissingKey(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherMode {
    /// Read the payload from `weather_fixture`.
    #[default]
    Fixture,
    Live,
    /// No provider; every recommendation uses degraded context.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default = "default_chat_url")]
    pub url: String,
    #[serde(default = "default_moderation_url")]
    pub moderation_url: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            url: default_chat_url(),
            moderation_url: default_moderation_url(),
            model: default_model(),
            timeout_secs: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    pub id: String,
    pub token: String,
    /// Overrides `default_mode` for this user.
    #[serde(default)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default)]
    pub provider: ProviderMode,
    #[serde(default)]
    pub weather: WeatherMode,
    #[serde(default)]
    pub weather_fixture: Option<PathBuf>,
    #[serde(default = "default_weather_url")]
    pub weather_url: String,
    #[serde(default = "default_location")]
    pub location: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_arms")]
    pub arms: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub temperature: TempThresholds,
    #[serde(default)]
    pub default_mode: Mode,
    #[serde(default = "default_expiry")]
    pub reward_expiry_hours: i64,
    #[serde(default)]
    pub moderation_deny: Vec<String>,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub users: Vec<UserEntry>,
    #[serde(skip)]
    pub llm_api_key: Option<String>,
    #[serde(skip)]
    pub weather_api_key: Option<String>,
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}
fn default_weather_url() -> String {
    DEFAULT_WEATHER_URL.to_string()
}
fn default_location() -> String {
    "Boston".to_string()
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_arms() -> Vec<String> {
    DEFAULT_ARMS.iter().map(|s| s.to_string()).collect()
}
fn default_seed() -> u64 {
    7
}
fn default_expiry() -> i64 {
    DEFAULT_EXPIRY_HOURS
}
fn default_chat_url() -> String {
    DEFAULT_CHAT_URL.to_string()
}
fn default_moderation_url() -> String {
    DEFAULT_MODERATION_URL.to_string()
}
fn default_model() -> String {
    DEFAULT_MODEL.to_string()
}
fn default_timeout() -> u64 {
    30
}

impl Default for ServiceConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl ServiceConfig {
    /// Parses TOML, applies `LLM_API_KEY` / `WEATHER_API_KEY` from the
    /// environment and validates. Relative paths resolve against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if self.data_dir.is_relative() {
            self.data_dir = base.join(&self.data_dir);
        }
        if let Some(f) = &self.weather_fixture {
            if f.is_relative() {
                self.weather_fixture = Some(base.join(f));
            }
        }
    }

    pub fn apply_env(&mut self) {
        if let Ok(key) = std::env::var("LLM_API_KEY") {
            self.llm_api_key = Some(key);
        }
        if let Ok(key) = std::env::var("WEATHER_API_KEY") {
            self.weather_api_key = Some(key);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return invalid(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.arms.is_empty() {
            return invalid("arms must not be empty".into());
        }
        if self.reward_expiry_hours <= 0 {
            return invalid("reward_expiry_hours must be positive".into());
        }
        self.temperature
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut ids = HashSet::new();
        let mut tokens = HashSet::new();
        for u in &self.users {
            if u.id.is_empty() || !u.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return invalid(format!("user id `{}` must be non-empty ASCII letters, digits, - or _", u.id));
            }
            if u.token.is_empty() {
                return invalid(format!("user `{}` has an empty token", u.id));
            }
            if !ids.insert(&u.id) {
                return invalid(format!("duplicate user id `{}`", u.id));
            }
            if !tokens.insert(&u.token) {
                return invalid(format!("duplicate token for user `{}`", u.id));
            }
        }
        if self.provider == ProviderMode::Live && self.llm_api_key.is_none() {
            return Err(ConfigError::MissingKey("LLM_API_KEY"));
        }
        match self.weather {
            WeatherMode::Live if self.weather_api_key.is_none() => Err(ConfigError::MissingKey("WEATHER_API_KEY")),
            WeatherMode::Fixture if self.weather_fixture.is_none() => {
                invalid("weather = \"fixture\" needs weather_fixture".into())
            }
            _ => Ok(()),
        }
    }

    pub fn mode_for(&self, user_id: &str) -> Mode {
        self.users
            .iter()
            .find(|u| u.id == user_id)
            .and_then(|u| u.mode)
            .unwrap_or(self.default_mode)
    }
}
