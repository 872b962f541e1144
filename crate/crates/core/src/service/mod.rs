//! HTTP service: chat with streamed replies, ingestion, metrics, adherence.

pub mod config;
mod state;

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex as AsyncMutex;

pub use config::{ConfigError, LlmConfig, ProviderMode, ServiceConfig, UserEntry, WeatherMode};
pub use state::{
    user_dir, IngestOutcome, Ports, StateError, UserState, BANDIT_FILE, PENDING_FILE, SESSIONS_FILE, STORE_FILE,
};

use crate::behavior::TechniqueDomain;
use crate::datastore::{run_query, Aggregate, AnalyticsQuery, DatastoreError, DateRange, LineError, Metric, UNAVAILABLE_MESSAGE};
use crate::domain::{AgentRoute, ChatTurn, Mode, RecId, Timestamp, UserId};

/// Separates the streamed reply from its metadata line.
pub const META_MARKER: &str = "\n\0META:";

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| chrono::Local::now().fixed_offset())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMeta {
    pub routes: Vec<AgentRoute>,
    pub techniques: Vec<TechniqueDomain>,
    pub rec_id: Option<RecId>,
}

impl From<&ChatTurn> for ChatMeta {
    fn from(turn: &ChatTurn) -> Self {
        Self {
            routes: turn.routes_taken.iter().copied().collect(),
            techniques: turn.techniques_used.clone(),
            rec_id: turn.rec_id.clone(),
        }
    }
}

/// Reply text in word-sized chunks, then the metadata trailer.
pub fn encode_stream(turn: &ChatTurn) -> Vec<String> {
    let mut chunks: Vec<String> = turn.text.split_inclusive(' ').map(str::to_string).collect();
    let meta = serde_json::to_string(&ChatMeta::from(turn)).expect("meta serializes");
    chunks.push(format!("{META_MARKER}{meta}"));
    chunks
}

/// Splits a complete streamed body into reply text and metadata.
pub fn decode_stream(body: &str) -> Option<(String, ChatMeta)> {
    let (text, meta) = body.rsplit_once(META_MARKER)?;
    Some((text.to_string(), serde_json::from_str(meta).ok()?))
}

pub struct AppState {
    config: ServiceConfig,
    ports: Ports,
    tokens: HashMap<String, UserId>,
    slots: Mutex<HashMap<UserId, Arc<AsyncMutex<Option<UserState>>>>>,
    clock: Clock,
}

impl AppState {
    pub fn new(config: ServiceConfig, ports: Ports, clock: Clock) -> Arc<Self> {
        let tokens = config
            .users
            .iter()
            .map(|u| (u.token.clone(), UserId::new(&u.id)))
            .collect();
        Arc::new(Self {
            config,
            ports,
            tokens,
            slots: Mutex::new(HashMap::new()),
            clock,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn slot(&self, user: &UserId) -> Arc<AsyncMutex<Option<UserState>>> {
        self.slots
            .lock()
            .expect("slot table poisoned")
            .entry(user.clone())
            .or_default()
            .clone()
    }

    /// Runs `f` on the user's state with that user's turns serialized. Work
    /// happens on the blocking pool because providers and files block.
    async fn with_user<R, F>(self: &Arc<Self>, user: UserId, f: F) -> Result<R, ApiError>
    where
        R: Send + 'static,
        F: FnOnce(&AppState, &mut UserState) -> Result<R, StateError> + Send + 'static,
    {
        let guard = self.slot(&user).lock_owned().await;
        let app = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            let mut guard = guard;
            if guard.is_none() {
                *guard = Some(UserState::load(&app.config.data_dir, user, &app.config)?);
            }
            f(&app, guard.as_mut().expect("loaded above"))
        })
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
    }

    fn authenticate(&self, headers: &HeaderMap) -> Result<UserId, ApiError> {
        let token = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ApiError::Unauthorized)?;
        self.tokens.get(token.trim()).cloned().ok_or(ApiError::Unauthorized)
    }
}

#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    BadRequest(String),
    Unprocessable(String),
    NotFound(String),
    Lines(Vec<LineError>),
    Unavailable,
    Internal(String),
}

impl From<StateError> for ApiError {
    fn from(err: StateError) -> Self {
        match err {
            StateError::Lines(lines) => ApiError::Lines(lines),
            StateError::Datastore(DatastoreError::Unavailable) => ApiError::Unavailable,
            StateError::Datastore(DatastoreError::InvalidQuery(m)) => ApiError::BadRequest(m),
            StateError::Ledger(e @ crate::orchestrator::LedgerError::UnknownRec(_)) => ApiError::NotFound(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    lines: Option<&'a [LineError]>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let json = |status: StatusCode, msg: &str| {
            (status, Json(ErrorBody { error: msg, lines: None })).into_response()
        };
        match self {
            ApiError::Unauthorized => json(StatusCode::UNAUTHORIZED, "unknown or missing bearer token"),
            ApiError::BadRequest(m) => json(StatusCode::BAD_REQUEST, &m),
            ApiError::Unprocessable(m) => json(StatusCode::UNPROCESSABLE_ENTITY, &m),
            ApiError::NotFound(m) => json(StatusCode::NOT_FOUND, &m),
            ApiError::Lines(lines) => (
                StatusCode::BAD_REQUEST,
                Json(ErrorBody {
                    error: "malformed lines; nothing was ingested",
                    lines: Some(&lines),
                }),
            )
                .into_response(),
            ApiError::Unavailable => (
                StatusCode::NOT_FOUND,
                [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
                UNAVAILABLE_MESSAGE,
            )
                .into_response(),
            ApiError::Internal(m) => {
                tracing::error!(error = %m, "request failed");
                json(StatusCode::SERVICE_UNAVAILABLE, "temporarily unable to handle the request")
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatRequest {
    user_id: String,
    message: String,
    #[serde(default)]
    mode: Option<Mode>,
}

async fn chat(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let user = app.authenticate(&headers)?;
    let req: ChatRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::Unprocessable(format!("invalid chat request: {e}")))?;
    if req.user_id != user.as_str() {
        return Err(ApiError::Unauthorized);
    }
    if req.message.trim().is_empty() {
        return Err(ApiError::Unprocessable("message is empty".into()));
    }
    let mode = req.mode.unwrap_or_else(|| app.config.mode_for(user.as_str()));
    let now = (app.clock)();
    let turn = app
        .with_user(user, move |app, state| {
            state.chat(&req.message, mode, now, &app.ports, &app.config)
        })
        .await?;
    let chunks = encode_stream(&turn);
    let stream = futures::stream::iter(chunks.into_iter().map(|c| Ok::<_, Infallible>(Bytes::from(c))));
    Ok((
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        Body::from_stream(stream),
    )
        .into_response())
}

#[derive(Debug, Serialize)]
struct IngestResponse {
    sleep: usize,
    activity: usize,
    physio: usize,
    rewards_applied: usize,
    updates: Vec<crate::orchestrator::AppliedUpdate>,
}

async fn ingest(State(app): State<Arc<AppState>>, headers: HeaderMap, body: String) -> Result<Response, ApiError> {
    let user = app.authenticate(&headers)?;
    let outcome = app.with_user(user, move |_, state| state.ingest(&body)).await?;
    for u in &outcome.applied {
        tracing::info!(rec_id = %u.rec_id, arm = %u.arm, reward = u.reward, "reward attributed");
    }
    Ok(Json(IngestResponse {
        sleep: outcome.report.sleep,
        activity: outcome.report.activity,
        physio: outcome.report.physio,
        rewards_applied: outcome.applied.len(),
        updates: outcome.applied,
    })
    .into_response())
}

#[derive(Debug, Deserialize)]
struct MetricsParams {
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    metric: Option<String>,
    aggregate: Option<String>,
    compare_from: Option<NaiveDate>,
    compare_to: Option<NaiveDate>,
}

async fn metrics(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    UrlPath(user_id): UrlPath<String>,
    Query(params): Query<MetricsParams>,
) -> Result<Response, ApiError> {
    let user = app.authenticate(&headers)?;
    if user.as_str() != user_id {
        return Err(ApiError::Unauthorized);
    }
    let metric: Metric = params
        .metric
        .as_deref()
        .unwrap_or("total_sleep_duration")
        .parse()
        .map_err(ApiError::BadRequest)?;
    let aggregate: Aggregate = params
        .aggregate
        .as_deref()
        .unwrap_or("mean")
        .parse()
        .map_err(ApiError::BadRequest)?;
    let to = params.to.unwrap_or_else(|| (app.clock)().date_naive());
    let range = match params.from {
        Some(from) => DateRange::new(from, to),
        None => DateRange::ending(to, 7),
    };
    let query = if aggregate == Aggregate::ComparePeriods {
        let (Some(cf), Some(ct)) = (params.compare_from, params.compare_to) else {
            return Err(ApiError::BadRequest("compare_periods needs compare_from and compare_to".into()));
        };
        AnalyticsQuery::compare(user.clone(), metric, range, DateRange::new(cf, ct))
    } else {
        AnalyticsQuery::new(user.clone(), metric, aggregate, range)
    };
    let result = app
        .with_user(user, move |_, state| Ok(run_query(&state.store, &query)?))
        .await?;
    Ok(Json(result).into_response())
}

#[derive(Debug, Deserialize)]
struct AdherenceRequest {
    rec_id: RecId,
    followed: bool,
}

async fn adherence(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<AdherenceRequest>,
) -> Result<StatusCode, ApiError> {
    let user = app.authenticate(&headers)?;
    let now = (app.clock)();
    let rec_id = req.rec_id.clone();
    app.with_user(user.clone(), move |_, state| state.record_adherence(&req.rec_id, req.followed, now))
        .await?;
    tracing::info!(user = %user.as_str(), rec_id = %rec_id, followed = req.followed, "adherence recorded");
    Ok(StatusCode::NO_CONTENT)
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/chat", post(chat))
        .route("/api/ingest", post(ingest))
        .route("/api/metrics/{user_id}", get(metrics))
        .route("/api/adherence", post(adherence))
        .route("/healthz", get(health))
        .with_state(app)
}

/// Serves until Ctrl-C.
pub async fn serve(app: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(app.config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
