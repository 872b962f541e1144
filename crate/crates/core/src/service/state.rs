use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration as StdDuration;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{load_state, save_state, BanditError, BanditModel};
use crate::context::{
    FixtureProvider, HttpWeatherProvider, UnavailableProvider, WeatherProvider, CONTEXT_DIM,
};
use crate::datastore::{write_atomic, Datastore, DatastoreError, IngestReport, LineError};
use crate::domain::{ChatTurn, Mode, RecId, Session, Timestamp, UserId};
use crate::orchestrator::live::{LiveLlm, LiveModeration};
use crate::orchestrator::{
    attribute_rewards, handle_turn, AppliedUpdate, LedgerError, LlmPort, MockLlm, MockModeration, ModerationPort,
    OrchestratorError, PendingLedger, TurnDeps,
};

use super::config::{ProviderMode, ServiceConfig, WeatherMode};

pub const BANDIT_FILE: &str = "bandit.state";
pub const SESSIONS_FILE: &str = "sessions.log";
pub const STORE_FILE: &str = "store.log";
pub const PENDING_FILE: &str = "pending.json";

#[derive(Debug, Error)]
pub enum StateError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Datastore(#[from] DatastoreError),
    #[error("bandit state: {0}")]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Turn(#[from] OrchestratorError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{} malformed line(s); nothing was ingested", .0.len())]
    Lines(Vec<LineError>),
}

/// Provider instances shared by every user.
#[derive(Clone)]
pub struct Ports {
    pub llm: Arc<dyn LlmPort>,
    pub moderation: Arc<dyn ModerationPort>,
    pub weather: Arc<dyn WeatherProvider>,
}

impl Ports {
    pub fn from_config(cfg: &ServiceConfig) -> Self {
        let timeout = StdDuration::from_secs(cfg.llm.timeout_secs);
        let (llm, moderation): (Arc<dyn LlmPort>, Arc<dyn ModerationPort>) = match (cfg.provider, &cfg.llm_api_key) {
            (ProviderMode::Live, Some(key)) => (
                Arc::new(LiveLlm::new(&cfg.llm.url, &cfg.llm.model, key, timeout)),
                Arc::new(LiveModeration::new(&cfg.llm.moderation_url, key, timeout)),
            ),
            _ => (
                Arc::new(MockLlm),
                Arc::new(MockModeration::with_deny_list(&cfg.moderation_deny)),
            ),
        };
        let weather: Arc<dyn WeatherProvider> = match (cfg.weather, &cfg.weather_fixture, &cfg.weather_api_key) {
            (WeatherMode::Fixture, Some(path), _) => Arc::new(FixtureProvider::new(path)),
            (WeatherMode::Live, _, Some(key)) => Arc::new(HttpWeatherProvider::new(&cfg.weather_url, key, timeout)),
            _ => Arc::new(UnavailableProvider),
        };
        Self {
            llm,
            moderation,
            weather,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum SessionEvent {
    Session {
        user_id: UserId,
        mode: Mode,
        created_at: Timestamp,
    },
    Turn {
        turn: ChatTurn,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub report: IngestReport,
    pub applied: Vec<AppliedUpdate>,
}

/// One user's persisted state: `users/<id>/` under the data directory.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub user_id: UserId,
    pub sessions: Vec<Session>,
    pub store: Datastore,
    pub bandit: BanditModel,
    pub ledger: PendingLedger,
    dir: PathBuf,
}

pub fn user_dir(data_dir: &Path, user: &UserId) -> PathBuf {
    data_dir.join("users").join(user.as_str())
}

fn corrupt(path: &Path, message: impl ToString) -> StateError {
    StateError::Corrupt {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn read_sessions(path: &Path) -> Result<Vec<Session>, StateError> {
    let mut sessions: Vec<Session> = Vec::new();
    if !path.exists() {
        return Ok(sessions);
    }
    let text = std::fs::read_to_string(path)?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: SessionEvent =
            serde_json::from_str(line).map_err(|e| corrupt(path, format!("line {}: {e}", i + 1)))?;
        match event {
            SessionEvent::Session {
                user_id,
                mode,
                created_at,
            } => sessions.push(Session::new(user_id, mode, created_at)),
            SessionEvent::Turn { turn } => sessions
                .last_mut()
                .ok_or_else(|| corrupt(path, format!("line {}: turn before any session", i + 1)))?
                .push(turn)
                .map_err(|e| corrupt(path, format!("line {}: {e}", i + 1)))?,
        }
    }
    Ok(sessions)
}

impl UserState {
    /// Loads whatever exists under the user's directory; missing files mean
    /// a fresh user. Nothing is written until the first change.
    pub fn load(data_dir: &Path, user_id: UserId, cfg: &ServiceConfig) -> Result<Self, StateError> {
        let dir = user_dir(data_dir, &user_id);
        let bandit_path = dir.join(BANDIT_FILE);
        let bandit = if bandit_path.exists() {
            let model = load_state(&std::fs::read(&bandit_path)?, Some(CONTEXT_DIM))?;
            if model.arm_ids().map(|a| a.name.as_str()).ne(cfg.arms.iter().map(String::as_str)) {
                tracing::warn!(user = %user_id, "stored bandit arms differ from config; keeping stored model");
            }
            model
        } else {
            BanditModel::new(&cfg.arms, CONTEXT_DIM, cfg.alpha, cfg.seed)?
        };
        let pending_path = dir.join(PENDING_FILE);
        let ledger = if pending_path.exists() {
            serde_json::from_slice(&std::fs::read(&pending_path)?).map_err(|e| corrupt(&pending_path, e))?
        } else {
            PendingLedger::default()
        };
        let store = Datastore::open(user_id.clone(), dir.join(STORE_FILE))?;
        let sessions = read_sessions(&dir.join(SESSIONS_FILE))?;
        Ok(Self {
            user_id,
            sessions,
            store,
            bandit,
            ledger,
            dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_ledger(&self, ledger: &PendingLedger) -> Result<(), StateError> {
        let bytes = serde_json::to_vec_pretty(ledger).expect("ledger serializes");
        write_atomic(&self.dir.join(PENDING_FILE), &bytes)?;
        Ok(())
    }

    fn write_bandit(&self, bandit: &BanditModel) -> Result<(), StateError> {
        write_atomic(&self.dir.join(BANDIT_FILE), &save_state(bandit))?;
        Ok(())
    }

    fn append_events(&self, events: &[SessionEvent]) -> Result<(), StateError> {
        std::fs::create_dir_all(&self.dir)?;
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).expect("event serializes");
            buf.push(b'\n');
        }
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(SESSIONS_FILE))?;
        f.write_all(&buf)?;
        f.sync_data()?;
        Ok(())
    }

    /// The session a new message in `mode` continues: the latest one if it
    /// has the same mode.
    pub fn current_session(&self, mode: Mode) -> Option<&Session> {
        self.sessions.last().filter(|s| s.mode == mode)
    }

    /// Runs one chat turn and persists it. On any error the in-memory state
    /// is left as it was.
    pub fn chat(
        &mut self,
        message: &str,
        mode: Mode,
        now: Timestamp,
        ports: &Ports,
        cfg: &ServiceConfig,
    ) -> Result<ChatTurn, StateError> {
        let (mut session, is_new) = match self.current_session(mode) {
            Some(s) => (s.clone(), false),
            None => (Session::new(self.user_id.clone(), mode, now), true),
        };
        let mut ledger = self.ledger.clone();
        let turn = {
            let mut deps = TurnDeps {
                llm: ports.llm.as_ref(),
                moderation: ports.moderation.as_ref(),
                weather: ports.weather.as_ref(),
                location: &cfg.location,
                thresholds: cfg.temperature,
                store: &self.store,
                bandit: &self.bandit,
                ledger: &mut ledger,
                expires_after: Duration::hours(cfg.reward_expiry_hours),
            };
            handle_turn(&mut session, message, now, &mut deps)?
        };

        let mut events = Vec::new();
        if is_new {
            events.push(SessionEvent::Session {
                user_id: session.user_id.clone(),
                mode: session.mode,
                created_at: session.created_at,
            });
        }
        let n = session.turns.len();
        for t in &session.turns[n - 2..] {
            events.push(SessionEvent::Turn { turn: t.clone() });
        }
        if ledger != self.ledger {
            self.write_ledger(&ledger)?;
        }
        self.append_events(&events)?;

        if is_new {
            self.sessions.push(session);
        } else {
            *self.sessions.last_mut().expect("current session exists") = session;
        }
        self.ledger = ledger;
        Ok(turn)
    }

    /// Ingests JSON-lines text. Any malformed line rejects the whole batch.
    /// New sleep records then settle pending rewards, oldest night first.
    pub fn ingest(&mut self, text: &str) -> Result<IngestOutcome, StateError> {
        let mut store = self.store.clone();
        let report = store.ingest_lines(text);
        if !report.errors.is_empty() {
            return Err(StateError::Lines(report.errors));
        }
        let mut nights = report.new_sleep.clone();
        nights.sort_by_key(|r| r.bedtime_start);
        let mut ledger = self.ledger.clone();
        let mut bandit = self.bandit.clone();
        let mut applied = Vec::new();
        for night in &nights {
            applied.extend(attribute_rewards(&mut ledger, night, &mut bandit)?);
        }

        store.flush()?;
        if !applied.is_empty() {
            self.write_bandit(&bandit)?;
        }
        if ledger != self.ledger {
            self.write_ledger(&ledger)?;
        }
        self.store = store;
        self.bandit = bandit;
        self.ledger = ledger;
        Ok(IngestOutcome { report, applied })
    }

    pub fn record_adherence(&mut self, rec_id: &RecId, followed: bool, at: Timestamp) -> Result<(), StateError> {
        let mut ledger = self.ledger.clone();
        ledger.record_adherence(rec_id, followed, at)?;
        self.write_ledger(&ledger)?;
        self.ledger = ledger;
        Ok(())
    }
}
