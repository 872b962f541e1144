//! Ports backed by an OpenAI-style HTTP API.

use std::time::Duration;

use serde_json::{json, Value};

use crate::behavior::TechniqueDomain;
use crate::context::{bin_time, map_weather};
use crate::datastore::{Aggregate, AnalyticsQuery, DateRange, Metric, UNAVAILABLE_MESSAGE};
use crate::domain::{ChatTurn, Mode, Role};

use super::port::{
    ClassifyRequest, ClassifyTask, LlmPort, ModerationPort, ModerationVerdict, PortError, QueryRequest, ReplyParts,
    TailorRequest,
};

pub const DEFAULT_CHAT_URL: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODERATION_URL: &str = "https://api.openai.com/v1/moderations";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

const COACH_PROMPT: &str = "You are a sleep health coach with clinical sleep expertise. \
Answer warmly and concisely in plain text, without markdown headings.";

/// History turns forwarded with each request.
const HISTORY_WINDOW: usize = 6;

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn map_err(err: ureq::Error) -> PortError {
    match err {
        ureq::Error::Timeout(_) => PortError::Timeout,
        other => PortError::Transport(other.to_string()),
    }
}

fn post_json(agent: &ureq::Agent, url: &str, key: &str, body: &Value) -> Result<Value, PortError> {
    let mut response = agent
        .post(url)
        .header("Authorization", &format!("Bearer {key}"))
        .send_json(body)
        .map_err(map_err)?;
    response
        .body_mut()
        .read_json::<Value>()
        .map_err(|e| PortError::BadAnswer(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct LiveLlm {
    url: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl LiveLlm {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: api_key.into(),
            agent: agent(timeout),
        }
    }

    /// Reads the key from `LLM_API_KEY`.
    pub fn from_env(url: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Result<Self, PortError> {
        let key = std::env::var("LLM_API_KEY").map_err(|_| PortError::Transport("LLM_API_KEY is not set".into()))?;
        Ok(Self::new(url, model, key, timeout))
    }

    fn chat(&self, system: &str, history: &[ChatTurn], user: &str) -> Result<String, PortError> {
        let mut messages = vec![json!({"role": "system", "content": system})];
        let start = history.len().saturating_sub(HISTORY_WINDOW);
        for turn in &history[start..] {
            let role = match turn.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": turn.text}));
        }
        messages.push(json!({"role": "user", "content": user}));
        let body = json!({"model": self.model, "messages": messages, "temperature": 0});
        let answer = post_json(&self.agent, &self.url, &self.api_key, &body)?;
        answer["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.trim().to_string())
            .ok_or_else(|| PortError::BadAnswer("response has no message content".into()))
    }
}

/// Splits a free-text label answer and keeps the offered labels, in order.
pub fn parse_labels(answer: &str, offered: &[&str], max: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for piece in answer.split([',', '\n', ';']) {
        let cleaned = piece
            .trim()
            .trim_matches(|c: char| !c.is_alphanumeric() && c != '_')
            .to_ascii_lowercase()
            .replace([' ', '-'], "_");
        if offered.contains(&cleaned.as_str()) && !out.contains(&cleaned) {
            out.push(cleaned);
        }
    }
    out.truncate(max);
    out
}

/// Parses `{"metric": .., "aggregate": .., "days": .., "compare": bool}` or
/// the literal `none`.
pub fn parse_query_answer(answer: &str, request: &QueryRequest<'_>) -> Result<Option<AnalyticsQuery>, PortError> {
    let trimmed = answer.trim().trim_matches('`').trim_start_matches("json").trim();
    if trimmed.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let bad = |m: String| PortError::BadAnswer(m);
    let v: Value = serde_json::from_str(trimmed).map_err(|e| bad(e.to_string()))?;
    let metric: Metric = v["metric"]
        .as_str()
        .ok_or_else(|| bad("missing metric".into()))?
        .parse()
        .map_err(|e: String| bad(e))?;
    let days = v["days"].as_u64().unwrap_or(7).clamp(1, 366) as u32;
    let range = DateRange::ending(request.today, days);
    if v["compare"].as_bool().unwrap_or(false) {
        let before = range.start.pred_opt().ok_or_else(|| bad("date out of range".into()))?;
        return Ok(Some(AnalyticsQuery::compare(
            request.user_id.clone(),
            metric,
            range,
            DateRange::ending(before, days),
        )));
    }
    let aggregate: Aggregate = v["aggregate"]
        .as_str()
        .unwrap_or("mean")
        .parse()
        .map_err(|e: String| bad(e))?;
    if aggregate == Aggregate::ComparePeriods {
        return Err(bad("compare_periods needs compare=true".into()));
    }
    Ok(Some(AnalyticsQuery::new(request.user_id.clone(), metric, aggregate, range)))
}

impl LlmPort for LiveLlm {
    fn classify(&self, request: &ClassifyRequest<'_>) -> Result<Vec<String>, PortError> {
        let purpose = match request.task {
            ClassifyTask::Route => {
                "Decide which kind of help the user's last message needs: data_insight (questions about their own \
                 recorded sleep or activity data), recommendation (asking what activity to do), both, technique_only \
                 (general sleep questions), or direct (greetings and small talk)."
            }
            ClassifyTask::Techniques => {
                "Pick the behavior-change technique domains that best fit a reply to the user's last message."
            }
        };
        let system = format!(
            "{purpose} Reply with at most {} label(s) from this list, comma separated, and nothing else: {}",
            request.max_labels,
            request.labels.join(", ")
        );
        let answer = self.chat(&system, request.history, request.message)?;
        let labels = parse_labels(&answer, request.labels, request.max_labels);
        if labels.is_empty() {
            return Err(PortError::BadAnswer(answer));
        }
        Ok(labels)
    }

    fn to_query(&self, request: &QueryRequest<'_>) -> Result<Option<AnalyticsQuery>, PortError> {
        let metrics: Vec<&str> = Metric::ALL.iter().map(|m| m.key()).collect();
        let system = format!(
            "Translate the user's question about their wearable data into JSON with keys metric (one of: {}), \
             aggregate (latest, mean, min, max or trend), days (how many days back from today, inclusive) and \
             compare (true when comparing with the preceding period of equal length). Today is {}. Reply with the \
             JSON only, or the word none if the question cannot be answered from these metrics.",
            metrics.join(", "),
            request.today
        );
        let answer = self.chat(&system, &[], request.message)?;
        parse_query_answer(&answer, request)
    }

    fn tailor(&self, request: &TailorRequest<'_>) -> Result<String, PortError> {
        let ctx = request.context;
        let when = bin_time(i64::from(ctx.local_hour)).map(|b| b.phrase()).unwrap_or("today");
        let mut system = format!(
            "{COACH_PROMPT} Suggest the activity `{}` to help tonight's sleep in one or two sentences. Mention the \
             activity by name and refer to the current conditions: {} and {:.0}°C, {}.",
            request.arm,
            map_weather(&ctx.weather_condition).describe(),
            ctx.temperature_c,
            when
        );
        if ctx.degraded {
            system.push_str(" Live weather is unavailable; say so briefly.");
        }
        self.chat(&system, &[], request.message)
    }

    fn compose(&self, parts: &ReplyParts) -> Result<String, PortError> {
        let mut system = String::from(COACH_PROMPT);
        if parts.insight_unavailable {
            system.push_str(&format!(
                " The user's data could not be retrieved. Begin your reply with exactly: \"{UNAVAILABLE_MESSAGE}\""
            ));
        }
        if !parts.facts.is_empty() {
            let facts: Vec<String> = parts.facts.iter().map(|f| f.to_string()).collect();
            system.push_str(&format!(" Report these facts from the user's data: {}.", facts.join("; ")));
        }
        if let Some(rec) = &parts.recommendation {
            system.push_str(&format!(" Include this recommendation: {rec}"));
        }
        if !parts.techniques.is_empty() {
            let guides: Vec<String> = parts
                .techniques
                .iter()
                .map(|d: &TechniqueDomain| {
                    let g = d.guidance();
                    format!("{} ({})", g.name, g.definition)
                })
                .collect();
            system.push_str(&format!(" Shape the reply with these techniques: {}.", guides.join("; ")));
        }
        if parts.mode == Mode::Baseline {
            system.push_str(" Give general sleep advice only; do not suggest specific activities.");
        }
        self.chat(&system, &[], &parts.message)
    }
}

#[derive(Debug, Clone)]
pub struct LiveModeration {
    url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl LiveModeration {
    pub fn new(url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            api_key: api_key.into(),
            agent: agent(timeout),
        }
    }
}

impl ModerationPort for LiveModeration {
    fn check(&self, text: &str) -> Result<ModerationVerdict, PortError> {
        let answer = post_json(&self.agent, &self.url, &self.api_key, &json!({ "input": text }))?;
        let result = &answer["results"][0];
        match result["flagged"].as_bool() {
            Some(false) => Ok(ModerationVerdict::Allow),
            Some(true) => {
                let categories: Vec<String> = result["categories"]
                    .as_object()
                    .map(|m| {
                        m.iter()
                            .filter(|(_, v)| v.as_bool() == Some(true))
                            .map(|(k, _)| k.clone())
                            .collect()
                    })
                    .unwrap_or_default();
                Ok(ModerationVerdict::Block {
                    reason: format!("flagged: {}", categories.join(", ")),
                })
            }
            None => Err(PortError::BadAnswer("moderation result has no `flagged` field".into())),
        }
    }
}
