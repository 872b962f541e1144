use std::collections::BTreeSet;

use crate::domain::{AgentRoute, ChatTurn, Mode};

use super::port::{ClassifyRequest, ClassifyTask, LlmPort};

const RECOMMEND_PATTERNS: &[&str] = &[
    "recommend",
    "what should i do",
    "suggest",
    "what can i do",
    "what to do",
    "any activity",
    "which activity",
];

const DATA_PATTERNS: &[&str] = &[
    "my sleep",
    "last night",
    "how did i sleep",
    "how much did i sleep",
    "how long did i sleep",
    "hrv",
    "score",
    "efficiency",
    "readiness",
    "heart rate",
    "average sleep",
    "trend",
    "my data",
    "stress level",
    "my activit",
    "time in bed",
    "breathing rate",
];

const SMALLTALK: &[&str] = &[
    "hello", "hi", "hey", "thanks", "thank you", "bye", "goodbye", "good morning", "good night", "ok", "okay",
];

/// Labels offered to a live classifier.
pub const ROUTE_LABELS: [&str; 5] = ["data_insight", "recommendation", "both", "technique_only", "direct"];

fn is_smalltalk(lower: &str) -> bool {
    let trimmed: String = lower
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let trimmed = trimmed.trim();
    SMALLTALK.contains(&trimmed)
        || SMALLTALK
            .iter()
            .any(|s| trimmed.starts_with(s) && trimmed.split_whitespace().count() <= 3)
}

/// Pattern routing: recommendation verbs and data references select their
/// agents; messages matching neither get technique-guided advice, except
/// small talk which is answered directly.
pub fn rule_route(message: &str) -> BTreeSet<AgentRoute> {
    let lower = message.to_lowercase();
    let mut routes = BTreeSet::new();
    if RECOMMEND_PATTERNS.iter().any(|p| lower.contains(p)) {
        routes.insert(AgentRoute::Recommendation);
    }
    if DATA_PATTERNS.iter().any(|p| lower.contains(p)) {
        routes.insert(AgentRoute::DataInsight);
    }
    if routes.is_empty() {
        routes.insert(if is_smalltalk(&lower) {
            AgentRoute::Direct
        } else {
            AgentRoute::TechniqueOnly
        });
    }
    routes
}

fn parse_route_labels(labels: &[String]) -> Option<BTreeSet<AgentRoute>> {
    let mut routes = BTreeSet::new();
    for label in labels {
        match label.trim().to_ascii_lowercase().as_str() {
            "data_insight" => {
                routes.insert(AgentRoute::DataInsight);
            }
            "recommendation" => {
                routes.insert(AgentRoute::Recommendation);
            }
            "both" => {
                routes.insert(AgentRoute::DataInsight);
                routes.insert(AgentRoute::Recommendation);
            }
            "technique_only" => {
                routes.insert(AgentRoute::TechniqueOnly);
            }
            "direct" => {
                routes.insert(AgentRoute::Direct);
            }
            _ => return None,
        }
    }
    if routes.is_empty() || (routes.contains(&AgentRoute::Direct) && routes.len() > 1) {
        return None;
    }
    Some(routes)
}

/// Routes a message. The port decides when it can; any failure or unusable
/// answer falls back to [`rule_route`].
pub fn route(message: &str, history: &[ChatTurn], port: &dyn LlmPort) -> BTreeSet<AgentRoute> {
    let request = ClassifyRequest {
        task: ClassifyTask::Route,
        message,
        history,
        labels: &ROUTE_LABELS,
        max_labels: 1,
    };
    match port.classify(&request) {
        Ok(labels) => parse_route_labels(&labels).unwrap_or_else(|| {
            tracing::warn!(?labels, "unusable routing answer, using rules");
            rule_route(message)
        }),
        Err(err) => {
            tracing::warn!(%err, "routing fell back to rules");
            rule_route(message)
        }
    }
}

/// Restricts routes to what `mode` allows. Baseline keeps data insight and
/// direct answers only.
pub fn routes_for_mode(routes: BTreeSet<AgentRoute>, mode: Mode) -> BTreeSet<AgentRoute> {
    match mode {
        Mode::HealthGuru => routes,
        Mode::Baseline => {
            let kept: BTreeSet<AgentRoute> = routes
                .into_iter()
                .filter(|r| matches!(r, AgentRoute::DataInsight | AgentRoute::Direct))
                .collect();
            if kept.is_empty() {
                BTreeSet::from([AgentRoute::Direct])
            } else {
                kept
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(routes: &[AgentRoute]) -> BTreeSet<AgentRoute> {
        routes.iter().copied().collect()
    }

    #[test]
    fn routing_examples() {
        assert_eq!(rule_route("What do you recommend me to do?"), set(&[AgentRoute::Recommendation]));
        assert_eq!(rule_route("How did I sleep last night?"), set(&[AgentRoute::DataInsight]));
        assert_eq!(rule_route("Hello"), set(&[AgentRoute::Direct]));
        assert_eq!(
            rule_route("My sleep score dropped, what do you suggest?"),
            set(&[AgentRoute::DataInsight, AgentRoute::Recommendation])
        );
        assert_eq!(
            rule_route("What are the possible reasons for waking up at midnight?"),
            set(&[AgentRoute::TechniqueOnly])
        );
    }

    #[test]
    fn baseline_strips_recommendations() {
        assert_eq!(
            routes_for_mode(set(&[AgentRoute::Recommendation]), Mode::Baseline),
            set(&[AgentRoute::Direct])
        );
        assert_eq!(
            routes_for_mode(set(&[AgentRoute::Recommendation, AgentRoute::DataInsight]), Mode::Baseline),
            set(&[AgentRoute::DataInsight])
        );
    }

    #[test]
    fn label_parsing() {
        assert_eq!(
            parse_route_labels(&["both".into()]),
            Some(set(&[AgentRoute::DataInsight, AgentRoute::Recommendation]))
        );
        assert_eq!(parse_route_labels(&["direct".into(), "recommendation".into()]), None);
        assert_eq!(parse_route_labels(&["weather".into()]), None);
    }
}
