//! Deterministic offline ports.

use crate::behavior::rule_select;
use crate::context::{bin_time, map_weather, WeatherBin};
use crate::datastore::{Aggregate, AnalyticsQuery, DateRange, Metric, UNAVAILABLE_MESSAGE};
use crate::domain::Mode;

use super::port::{
    ClassifyRequest, ClassifyTask, LlmPort, ModerationPort, ModerationVerdict, PortError, QueryRequest, ReplyParts,
    TailorRequest,
};
use super::routing::rule_route;

/// Reply for a direct turn in healthguru mode.
pub const GREETING_REPLY: &str =
    "Hi! I'm your sleep coach. Ask me how you slept, how your numbers are trending, or what to do today to sleep better.";

/// Reply for a direct turn in baseline mode.
pub const GENERIC_ADVICE_REPLY: &str = "Regular bed and wake times, a dark and quiet bedroom, less caffeine after noon and some daytime movement all tend to help sleep. Ask me about your sleep data any time.";

/// Arms that take place outdoors and move inside in bad weather.
const OUTDOOR_ARMS: &[&str] = &["walking", "running", "cycling", "hiking"];

/// Metric keyword table, first hit wins.
const METRIC_PATTERNS: &[(&[&str], Metric)] = &[
    (&["efficiency"], Metric::Efficiency),
    (&["readiness"], Metric::ReadinessScore),
    (&["hrv", "heart rate variability"], Metric::AverageHrv),
    (&["lowest heart rate", "resting heart rate"], Metric::LowestHeartRate),
    (&["heart rate", "pulse"], Metric::AverageHeartRate),
    (&["breath"], Metric::AverageBreath),
    (&["stress"], Metric::StressLevel),
    (&["time in bed"], Metric::TimeInBed),
    (&["minutes of activity", "activity minutes", "active minutes", "exercise"], Metric::ActivityMinutes),
    (&["activities", "activity", "workout"], Metric::ActivityCount),
    (&["score", "how did i sleep", "sleep quality"], Metric::SleepScore),
    (&["sleep", "slept"], Metric::TotalSleepDuration),
];

#[derive(Debug, Clone, Default)]
pub struct MockLlm;

impl MockLlm {
    /// Builds the structured query for a data question, if the pattern table
    /// recognises a metric.
    pub fn query_for(request: &QueryRequest<'_>) -> Option<AnalyticsQuery> {
        let lower = request.message.to_lowercase();
        let metric = METRIC_PATTERNS
            .iter()
            .find(|(needles, _)| needles.iter().any(|n| lower.contains(n)))
            .map(|(_, m)| *m)?;
        let today = request.today;
        let user = request.user_id.clone();

        if ["compare", " vs", "versus", "than last week", "than the week before"]
            .iter()
            .any(|n| lower.contains(n))
        {
            let this_week = DateRange::ending(today, 7);
            let last_week = DateRange::ending(this_week.start.pred_opt()?, 7);
            return Some(AnalyticsQuery::compare(user, metric, this_week, last_week));
        }

        let single_day = if lower.contains("last night") || lower.contains("today") {
            Some(today)
        } else if lower.contains("yesterday") {
            today.pred_opt()
        } else {
            None
        };
        let span = if lower.contains("month") {
            30
        } else if lower.contains("two weeks") || lower.contains("fortnight") {
            14
        } else {
            7
        };

        let without_metric_words = lower.replace("lowest heart rate", "");
        let aggregate = if lower.contains("trend") || lower.contains("trending") {
            Aggregate::Trend
        } else if ["lowest", "minimum", "worst"].iter().any(|n| without_metric_words.contains(n)) {
            Aggregate::Min
        } else if ["highest", "maximum", "best"].iter().any(|n| lower.contains(n)) {
            Aggregate::Max
        } else if ["average", "mean", "typical"].iter().any(|n| lower.contains(n)) {
            Aggregate::Mean
        } else if single_day.is_some() {
            Aggregate::Latest
        } else {
            Aggregate::Mean
        };
        let range = match (aggregate, single_day) {
            (Aggregate::Latest, Some(day)) => DateRange::new(day, day),
            _ => DateRange::ending(today, span),
        };
        Some(AnalyticsQuery::new(user, metric, aggregate, range))
    }

    pub fn tailor_text(request: &TailorRequest<'_>) -> String {
        let ctx = request.context;
        let weather = map_weather(&ctx.weather_condition);
        let when = bin_time(i64::from(ctx.local_hour))
            .map(|b| b.phrase())
            .unwrap_or("today");
        let mut text = format!(
            "Given it's {} and {:.0}°C, a {} session {} could help your sleep.",
            weather.describe(),
            ctx.temperature_c,
            request.arm,
            when
        );
        if OUTDOOR_ARMS.contains(&request.arm) && matches!(weather, WeatherBin::Rain | WeatherBin::Snow) {
            text.push_str(" With the weather like this, an indoor option such as a treadmill or mall walk works just as well.");
        }
        if ctx.degraded {
            text.push_str(" (Live weather was unavailable, so this suggestion leans on the time of day.)");
        }
        text
    }

    pub fn compose_text(parts: &ReplyParts) -> String {
        if parts.is_direct() {
            return match parts.mode {
                Mode::HealthGuru => GREETING_REPLY.to_string(),
                Mode::Baseline => GENERIC_ADVICE_REPLY.to_string(),
            };
        }
        let mut sections = Vec::new();
        if parts.insight_unavailable {
            sections.push(UNAVAILABLE_MESSAGE.to_string());
        } else if !parts.facts.is_empty() {
            let lines: Vec<String> = parts.facts.iter().map(|f| format!("- {f}")).collect();
            sections.push(format!("Here is what your data shows:\n{}", lines.join("\n")));
        }
        if let Some(rec) = &parts.recommendation {
            sections.push(rec.clone());
        }
        for domain in &parts.techniques {
            sections.push(domain.guidance().reply_line.clone());
        }
        if sections.is_empty() {
            // Baseline turns routed to nothing but direct advice end up here.
            sections.push(GENERIC_ADVICE_REPLY.to_string());
        }
        sections.join("\n\n")
    }
}

impl LlmPort for MockLlm {
    fn classify(&self, request: &ClassifyRequest<'_>) -> Result<Vec<String>, PortError> {
        Ok(match request.task {
            ClassifyTask::Route => {
                let routes = rule_route(request.message);
                if routes.len() == 2 {
                    vec!["both".to_string()]
                } else {
                    routes.iter().map(|r| r.as_str().to_string()).collect()
                }
            }
            ClassifyTask::Techniques => rule_select(request.message, request.history)
                .domains
                .into_iter()
                .take(request.max_labels)
                .map(|d| d.key().to_string())
                .collect(),
        })
    }

    fn to_query(&self, request: &QueryRequest<'_>) -> Result<Option<AnalyticsQuery>, PortError> {
        Ok(Self::query_for(request))
    }

    fn tailor(&self, request: &TailorRequest<'_>) -> Result<String, PortError> {
        Ok(Self::tailor_text(request))
    }

    fn compose(&self, parts: &ReplyParts) -> Result<String, PortError> {
        Ok(Self::compose_text(parts))
    }
}

/// Allows everything except messages containing a deny-listed phrase.
#[derive(Debug, Clone, Default)]
pub struct MockModeration {
    deny: Vec<String>,
}

impl MockModeration {
    pub fn with_deny_list<S: AsRef<str>>(phrases: &[S]) -> Self {
        Self {
            deny: phrases.iter().map(|p| p.as_ref().to_lowercase()).collect(),
        }
    }
}

impl ModerationPort for MockModeration {
    fn check(&self, text: &str) -> Result<ModerationVerdict, PortError> {
        let lower = text.to_lowercase();
        Ok(match self.deny.iter().find(|p| lower.contains(p.as_str())) {
            Some(p) => ModerationVerdict::Block {
                reason: format!("matched deny-list phrase `{p}`"),
            },
            None => ModerationVerdict::Allow,
        })
    }
}
