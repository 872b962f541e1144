//! The seven behavior-change technique domains and the logic that picks
//! which of them shape a reply.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ChatTurn, Role};
use crate::orchestrator::{ClassifyRequest, ClassifyTask, LlmPort};

/// Upper bound on domains mixed into one reply.
pub const MAX_TECHNIQUES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechniqueDomain {
    ConsequencesAndReinforcement,
    FeedbackAndMonitoring,
    Goals,
    Knowledge,
    EnvironmentalContextAndResources,
    SkillsAndCapabilities,
    EmotionalSupport,
}

impl TechniqueDomain {
    pub const ALL: [TechniqueDomain; 7] = [
        Self::ConsequencesAndReinforcement,
        Self::FeedbackAndMonitoring,
        Self::Goals,
        Self::Knowledge,
        Self::EnvironmentalContextAndResources,
        Self::SkillsAndCapabilities,
        Self::EmotionalSupport,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Self::ConsequencesAndReinforcement => "consequences_and_reinforcement",
            Self::FeedbackAndMonitoring => "feedback_and_monitoring",
            Self::Goals => "goals",
            Self::Knowledge => "knowledge",
            Self::EnvironmentalContextAndResources => "environmental_context_and_resources",
            Self::SkillsAndCapabilities => "skills_and_capabilities",
            Self::EmotionalSupport => "emotional_support",
        }
    }

    /// Accepts the snake_case key or the display name, case-insensitively.
    pub fn parse(label: &str) -> Option<Self> {
        fn words(s: &str) -> Vec<String> {
            s.to_ascii_lowercase()
                .split(|c: char| !c.is_ascii_alphanumeric())
                .filter(|w| !w.is_empty() && *w != "and")
                .map(str::to_string)
                .collect()
        }
        let wanted = words(label);
        Self::ALL.into_iter().find(|d| words(d.key()) == wanted)
    }

    pub fn guidance(self) -> &'static TechniqueGuidance {
        technique_table()
            .iter()
            .find(|g| g.domain == self)
            .expect("technique table covers every domain")
    }
}

/// One row of the technique table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueGuidance {
    pub domain: TechniqueDomain,
    pub name: String,
    pub definition: String,
    pub example: String,
    /// Sentence the offline composer adds when this domain is selected.
    pub reply_line: String,
}

const TECHNIQUE_DATA: &str = include_str!("../data/techniques.json");

pub fn technique_table() -> &'static [TechniqueGuidance] {
    static TABLE: OnceLock<Vec<TechniqueGuidance>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let rows: Vec<TechniqueGuidance> = serde_json::from_str(TECHNIQUE_DATA).expect("techniques.json is valid");
        assert_eq!(rows.len(), TechniqueDomain::ALL.len());
        rows
    })
}

pub fn technique_guidance(domain: TechniqueDomain) -> (&'static str, &'static str) {
    let g = domain.guidance();
    (&g.definition, &g.example)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueSelection {
    pub domains: Vec<TechniqueDomain>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BehaviorError {
    #[error("message is empty")]
    EmptyMessage,
}

/// Keyword → domain rules for offline selection, in priority order.
const TECHNIQUE_RULES: &[(TechniqueDomain, &[&str])] = &[
    (
        TechniqueDomain::EmotionalSupport,
        &["stress", "anxious", "anxiety", "sad", "worried", "overwhelm", "frustrat", "lonely", "heartbroken", "broken heart", "upset", "depress"],
    ),
    (TechniqueDomain::Goals, &["goal", "target", "aim for", "objective", "plan to", "commit"]),
    (
        TechniqueDomain::Knowledge,
        &["why", "reason", "cause", "explain", "what is", "what does", "how does", "is it true", "does caffeine", "melatonin"],
    ),
    (
        TechniqueDomain::FeedbackAndMonitoring,
        &["my sleep", "last night", "score", "hrv", "data", "efficiency", "trend", "readiness", "progress", "this week", "past week", "how did i"],
    ),
    (
        TechniqueDomain::SkillsAndCapabilities,
        &["how do i", "how can i", "technique", "exercise", "practice", "breathing", "relax", "tips", "fall asleep"],
    ),
    (
        TechniqueDomain::EnvironmentalContextAndResources,
        &["noise", "noisy", "bedroom", "mattress", "pillow", "dark", "room temperature", "light in", "environment"],
    ),
    (
        TechniqueDomain::ConsequencesAndReinforcement,
        &["what happens", "consequence", "effect of", "worth it", "improved", "better than", "did it help"],
    ),
];

/// Deterministic selection from the keyword table. When the message matches
/// nothing, the most recent assistant turn's first technique is carried
/// forward; failing that, Knowledge.
pub fn rule_select(message: &str, history: &[ChatTurn]) -> TechniqueSelection {
    let lower = message.to_lowercase();
    let mut domains = Vec::new();
    let mut hits = Vec::new();
    for (domain, needles) in TECHNIQUE_RULES {
        if let Some(needle) = needles.iter().find(|n| lower.contains(*n)) {
            domains.push(*domain);
            hits.push(format!("{} (\"{needle}\")", domain.key()));
            if domains.len() == MAX_TECHNIQUES {
                break;
            }
        }
    }
    if !domains.is_empty() {
        return TechniqueSelection {
            domains,
            rationale: format!("keyword match: {}", hits.join(", ")),
        };
    }
    let carried = history
        .iter()
        .rev()
        .find(|t| t.role == Role::Assistant && !t.techniques_used.is_empty())
        .map(|t| t.techniques_used[0]);
    match carried {
        Some(domain) => TechniqueSelection {
            domains: vec![domain],
            rationale: format!("no keyword match; continuing with {}", domain.key()),
        },
        None => TechniqueSelection {
            domains: vec![TechniqueDomain::Knowledge],
            rationale: "no keyword match; default".into(),
        },
    }
}

/// Selects 1–3 technique domains. Port failures and unusable answers fall
/// back to [`rule_select`], so this never fails on a non-empty message.
pub fn select_techniques(
    message: &str,
    history: &[ChatTurn],
    port: &dyn LlmPort,
) -> Result<TechniqueSelection, BehaviorError> {
    if message.trim().is_empty() {
        return Err(BehaviorError::EmptyMessage);
    }
    let labels: Vec<&str> = TechniqueDomain::ALL.iter().map(|d| d.key()).collect();
    let request = ClassifyRequest {
        task: ClassifyTask::Techniques,
        message,
        history,
        labels: &labels,
        max_labels: MAX_TECHNIQUES,
    };
    match port.classify(&request) {
        Ok(answer) => {
            let mut domains = Vec::new();
            for label in &answer {
                if let Some(d) = TechniqueDomain::parse(label) {
                    if !domains.contains(&d) {
                        domains.push(d);
                    }
                }
            }
            domains.truncate(MAX_TECHNIQUES);
            if domains.is_empty() {
                let mut sel = rule_select(message, history);
                sel.rationale = format!("unusable port answer {answer:?}; {}", sel.rationale);
                Ok(sel)
            } else {
                Ok(TechniqueSelection {
                    domains,
                    rationale: "selected by language model".into(),
                })
            }
        }
        Err(err) => {
            tracing::warn!(%err, "technique selection fell back to rules");
            Ok(rule_select(message, history))
        }
    }
}
