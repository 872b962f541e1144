//! Multi-agent turn pipeline and the recommendation reward loop.

mod agents;
pub mod live;
mod mock;
mod port;
mod rewards;
mod routing;

use chrono::Duration;
use thiserror::Error;

pub use agents::{compose_response, data_insight, recommend};
pub use mock::{MockLlm, MockModeration, GENERIC_ADVICE_REPLY, GREETING_REPLY};
pub use port::{
    ClassifyRequest, ClassifyTask, LlmPort, ModerationPort, ModerationVerdict, PortError, QueryRequest, ReplyParts,
    TailorRequest,
};
pub use rewards::{
    attribute_rewards, AdherenceEntry, AppliedUpdate, LedgerError, PendingLedger, PendingReward, DEFAULT_EXPIRY_HOURS,
};
pub use routing::{route, routes_for_mode, rule_route, ROUTE_LABELS};

use crate::bandit::{BanditError, BanditModel};
use crate::behavior::select_techniques;
use crate::context::{fetch_context_or_degraded, ContextError, TempThresholds, WeatherProvider};
use crate::datastore::{Datastore, DatastoreError, UNAVAILABLE_MESSAGE};
use crate::domain::{AgentRoute, ChatTurn, Mode, Recommendation, Role, Session, SessionError, Timestamp};

pub const REFUSAL_REPLY: &str =
    "I can't help with that. If you are going through something difficult, please reach out to a health professional.";

pub const INTERNAL_ERROR_REPLY: &str = "Sorry, something went wrong while preparing my answer. Please try again.";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("message is empty")]
    EmptyMessage,
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Datastore(DatastoreError),
}

/// Everything a turn reads, plus the ledger it may append to.
pub struct TurnDeps<'a> {
    pub llm: &'a dyn LlmPort,
    pub moderation: &'a dyn ModerationPort,
    pub weather: &'a dyn WeatherProvider,
    pub location: &'a str,
    pub thresholds: TempThresholds,
    pub store: &'a Datastore,
    pub bandit: &'a BanditModel,
    pub ledger: &'a mut PendingLedger,
    pub expires_after: Duration,
}

/// Strictly after the session's last turn.
fn turn_time(session: &Session, now: Timestamp) -> Timestamp {
    match session.turns.last() {
        Some(last) if now <= last.timestamp => last.timestamp + Duration::milliseconds(1),
        _ => now,
    }
}

fn assistant_turn(text: String, timestamp: Timestamp) -> ChatTurn {
    ChatTurn {
        role: Role::Assistant,
        text,
        timestamp,
        routes_taken: Default::default(),
        techniques_used: Vec::new(),
        rec_id: None,
    }
}

fn run_pipeline(
    session: &Session,
    message: &str,
    at: Timestamp,
    deps: &TurnDeps<'_>,
) -> Result<(ChatTurn, Option<Recommendation>), OrchestratorError> {
    // The user's own turn is already the last entry.
    let history = &session.turns[..session.turns.len().saturating_sub(1)];
    let routes = routes_for_mode(route(message, history, deps.llm), session.mode);

    let mut parts = ReplyParts {
        message: message.to_string(),
        mode: session.mode,
        ..ReplyParts::default()
    };
    if routes.contains(&AgentRoute::DataInsight) {
        match data_insight(message, &session.user_id, at.date_naive(), deps.store, deps.llm) {
            Ok(facts) => parts.facts = facts,
            Err(DatastoreError::Unavailable) => parts.insight_unavailable = true,
            Err(err) => return Err(OrchestratorError::Datastore(err)),
        }
    }
    let mut rec = None;
    if routes.contains(&AgentRoute::Recommendation) {
        let snapshot = fetch_context_or_degraded(deps.location, deps.weather, at, &deps.thresholds);
        let r = recommend(
            &session.user_id,
            deps.ledger.next_rec_id(&session.user_id),
            &snapshot,
            message,
            deps.bandit,
            &deps.thresholds,
            deps.llm,
            at,
        )?;
        parts.recommendation = Some(r.tailored_text.clone());
        rec = Some(r);
    }
    if session.mode == Mode::HealthGuru && !routes.contains(&AgentRoute::Direct) {
        let selection = select_techniques(message, history, deps.llm).map_err(|_| OrchestratorError::EmptyMessage)?;
        parts.techniques = selection.domains;
    }

    let mut text = compose_response(&parts, deps.llm);
    if parts.insight_unavailable && !text.contains(UNAVAILABLE_MESSAGE) {
        text = format!("{UNAVAILABLE_MESSAGE}\n\n{text}");
    }
    let mut turn = assistant_turn(text, at);
    turn.routes_taken = routes;
    turn.techniques_used = parts.techniques;
    turn.rec_id = rec.as_ref().map(|r| r.rec_id.clone());
    Ok((turn, rec))
}

/// Runs one user message through moderation, routing, the agents and the
/// composer, appending both the user turn and the reply to `session`.
///
/// Only an empty message is an error. Blocked messages get a refusal turn
/// and internal failures an apology turn; in both cases nothing else changes.
pub fn handle_turn(
    session: &mut Session,
    message: &str,
    now: Timestamp,
    deps: &mut TurnDeps<'_>,
) -> Result<ChatTurn, OrchestratorError> {
    let message = message.trim();
    if message.is_empty() {
        return Err(OrchestratorError::EmptyMessage);
    }
    let user_at = turn_time(session, now);
    session.push(ChatTurn::user(message, user_at))?;
    let reply_at = user_at + Duration::milliseconds(1);

    let verdict = deps.moderation.check(message).unwrap_or_else(|err| {
        tracing::warn!(%err, "moderation unavailable, allowing message");
        ModerationVerdict::Allow
    });
    let turn = match verdict {
        ModerationVerdict::Block { reason } => {
            tracing::info!(%reason, "message blocked");
            assistant_turn(REFUSAL_REPLY.to_string(), reply_at)
        }
        ModerationVerdict::Allow => match run_pipeline(session, message, reply_at, deps) {
            Ok((turn, rec)) => match rec {
                Some(rec) => match deps.ledger.issue(rec, deps.expires_after) {
                    Ok(()) => turn,
                    Err(err) => {
                        tracing::error!(%err, "could not record recommendation");
                        assistant_turn(INTERNAL_ERROR_REPLY.to_string(), reply_at)
                    }
                },
                None => turn,
            },
            Err(err) => {
                tracing::error!(%err, "turn pipeline failed");
                assistant_turn(INTERNAL_ERROR_REPLY.to_string(), reply_at)
            }
        },
    };
    session.push(turn.clone())?;
    Ok(turn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::DEFAULT_ARMS;
    use crate::context::{FixtureProvider, UnavailableProvider, CONTEXT_DIM};
    use crate::domain::UserId;
    use chrono::DateTime;
    use std::collections::BTreeSet;

    fn ts(s: &str) -> Timestamp {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    struct Fixture {
        store: Datastore,
        bandit: BanditModel,
        ledger: PendingLedger,
        moderation: MockModeration,
    }

    impl Fixture {
        fn new() -> Self {
            Self {
                store: Datastore::new(UserId::new("u1")),
                bandit: BanditModel::new(&DEFAULT_ARMS, CONTEXT_DIM, 1.0, 7).unwrap(),
                ledger: PendingLedger::default(),
                moderation: MockModeration::with_deny_list(&["blocked phrase"]),
            }
        }

        fn turn(&mut self, session: &mut Session, message: &str, weather: &dyn WeatherProvider) -> ChatTurn {
            let llm = MockLlm;
            let mut deps = TurnDeps {
                llm: &llm,
                moderation: &self.moderation,
                weather,
                location: "Boston",
                thresholds: TempThresholds::default(),
                store: &self.store,
                bandit: &self.bandit,
                ledger: &mut self.ledger,
                expires_after: Duration::hours(DEFAULT_EXPIRY_HOURS),
            };
            handle_turn(session, message, ts("2024-08-14T15:00:00-04:00"), &mut deps).unwrap()
        }
    }

    fn session(mode: Mode) -> Session {
        Session::new(UserId::new("u1"), mode, ts("2024-08-14T08:00:00-04:00"))
    }

    #[test]
    fn recommendation_turn_creates_pending() {
        let mut f = Fixture::new();
        let mut s = session(Mode::HealthGuru);
        let turn = f.turn(&mut s, "What should I do today?", &UnavailableProvider);
        assert_eq!(turn.routes_taken, BTreeSet::from([AgentRoute::Recommendation]));
        assert!(!turn.techniques_used.is_empty());
        assert!(turn.rec_id.is_some());
        assert_eq!(f.ledger.pending.len(), 1);
        let rec = &f.ledger.recommendations[turn.rec_id.as_ref().unwrap()];
        assert!(rec.degraded_context);
        assert!(turn.text.contains(&rec.arm.name));
        assert_eq!(s.turns.len(), 2);
    }

    #[test]
    fn baseline_has_no_recommendation() {
        let mut f = Fixture::new();
        let mut s = session(Mode::Baseline);
        let turn = f.turn(&mut s, "What should I do today?", &UnavailableProvider);
        assert_eq!(turn.routes_taken, BTreeSet::from([AgentRoute::Direct]));
        assert!(turn.techniques_used.is_empty());
        assert_eq!(turn.text, GENERIC_ADVICE_REPLY);
        assert!(f.ledger.pending.is_empty());
    }

    #[test]
    fn blocked_message_gets_refusal() {
        let mut f = Fixture::new();
        let mut s = session(Mode::HealthGuru);
        let turn = f.turn(&mut s, "this has a Blocked Phrase in it", &UnavailableProvider);
        assert_eq!(turn.text, REFUSAL_REPLY);
        assert!(turn.routes_taken.is_empty());
    }

    #[test]
    fn empty_store_gives_apology() {
        let mut f = Fixture::new();
        let mut s = session(Mode::HealthGuru);
        let turn = f.turn(&mut s, "How did I sleep last night?", &UnavailableProvider);
        assert!(turn.text.starts_with(UNAVAILABLE_MESSAGE));
    }

    #[test]
    fn empty_message_rejected_without_touching_session() {
        let mut f = Fixture::new();
        let mut s = session(Mode::HealthGuru);
        let llm = MockLlm;
        let mut deps = TurnDeps {
            llm: &llm,
            moderation: &f.moderation,
            weather: &UnavailableProvider,
            location: "Boston",
            thresholds: TempThresholds::default(),
            store: &f.store,
            bandit: &f.bandit,
            ledger: &mut f.ledger,
            expires_after: Duration::hours(24),
        };
        assert!(matches!(
            handle_turn(&mut s, "   ", ts("2024-08-14T15:00:00-04:00"), &mut deps),
            Err(OrchestratorError::EmptyMessage)
        ));
        assert!(s.turns.is_empty());
    }

    #[test]
    fn same_clock_keeps_turns_ordered() {
        let mut f = Fixture::new();
        let mut s = session(Mode::HealthGuru);
        f.turn(&mut s, "Hello", &UnavailableProvider);
        f.turn(&mut s, "Hello again", &UnavailableProvider);
        let stamps: Vec<_> = s.turns.iter().map(|t| t.timestamp).collect();
        assert!(stamps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fixture_weather_reaches_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weather.json");
        std::fs::write(
            &path,
            r#"{"location":{"name":"Boston","localtime":"2024-08-14 15:00"},"current":{"temp_c":24.0,"condition":{"text":"Sunny"}}}"#,
        )
        .unwrap();
        let mut f = Fixture::new();
        let mut s = session(Mode::HealthGuru);
        let turn = f.turn(&mut s, "What do you recommend me to do?", &FixtureProvider::new(&path));
        assert!(turn.text.contains("Given it's sunny and 24°C"));
    }
}
