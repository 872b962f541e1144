use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::TechniqueDomain;
use crate::datastore::{AnalyticsQuery, Fact};
use crate::domain::{ChatTurn, ContextSnapshot, Mode, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PortError {
    #[error("provider request failed: {0}")]
    Transport(String),
    #[error("provider timed out")]
    Timeout,
    #[error("unusable provider answer: {0}")]
    BadAnswer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifyTask {
    /// Which agents a message needs.
    Route,
    /// Which technique domains shape the reply.
    Techniques,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyRequest<'a> {
    pub task: ClassifyTask,
    pub message: &'a str,
    pub history: &'a [ChatTurn],
    pub labels: &'a [&'a str],
    pub max_labels: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QueryRequest<'a> {
    pub message: &'a str,
    pub user_id: &'a UserId,
    pub today: NaiveDate,
}

#[derive(Debug, Clone, Copy)]
pub struct TailorRequest<'a> {
    pub arm: &'a str,
    pub context: &'a ContextSnapshot,
    pub message: &'a str,
}

/// Everything the response step may draw on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplyParts {
    pub message: String,
    pub mode: Mode,
    pub facts: Vec<Fact>,
    /// The data agent was asked but could not answer.
    pub insight_unavailable: bool,
    pub recommendation: Option<String>,
    pub techniques: Vec<TechniqueDomain>,
}

impl ReplyParts {
    pub fn is_direct(&self) -> bool {
        self.facts.is_empty() && !self.insight_unavailable && self.recommendation.is_none() && self.techniques.is_empty()
    }
}

/// Language-model boundary used by the agents. Offline implementations must
/// be deterministic.
pub trait LlmPort: Send + Sync {
    /// Picks up to `max_labels` of `labels`.
    fn classify(&self, request: &ClassifyRequest<'_>) -> Result<Vec<String>, PortError>;
    /// Translates a data question into a structured query; `None` when the
    /// question is not answerable from the supported query set.
    fn to_query(&self, request: &QueryRequest<'_>) -> Result<Option<AnalyticsQuery>, PortError>;
    /// Rewrites the chosen activity for the current context.
    fn tailor(&self, request: &TailorRequest<'_>) -> Result<String, PortError>;
    fn compose(&self, parts: &ReplyParts) -> Result<String, PortError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModerationVerdict {
    Allow,
    Block { reason: String },
}

pub trait ModerationPort: Send + Sync {
    fn check(&self, text: &str) -> Result<ModerationVerdict, PortError>;
}
