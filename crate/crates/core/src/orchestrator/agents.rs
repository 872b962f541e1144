use chrono::NaiveDate;

use crate::bandit::BanditModel;
use crate::context::{featurize, TempThresholds};
use crate::datastore::{run_query, Datastore, DatastoreError, Fact};
use crate::domain::{ContextSnapshot, RecId, Recommendation, Timestamp, UserId};

use super::mock::MockLlm;
use super::port::{LlmPort, QueryRequest, ReplyParts, TailorRequest};
use super::OrchestratorError;

/// Answers a data question from the user's store. Anything the query set
/// cannot express comes back as [`DatastoreError::Unavailable`].
pub fn data_insight(
    message: &str,
    user: &UserId,
    today: NaiveDate,
    store: &Datastore,
    port: &dyn LlmPort,
) -> Result<Vec<Fact>, DatastoreError> {
    let request = QueryRequest {
        message,
        user_id: user,
        today,
    };
    let query = port.to_query(&request).unwrap_or_else(|err| {
        tracing::warn!(%err, "query translation fell back to patterns");
        MockLlm::query_for(&request)
    });
    let Some(query) = query else {
        return Err(DatastoreError::Unavailable);
    };
    if &query.user_id != store.user_id() {
        return Err(DatastoreError::Unavailable);
    }
    match run_query(store, &query) {
        Ok(result) => Ok(result.narrative_facts),
        Err(DatastoreError::InvalidQuery(msg)) => {
            tracing::warn!(%msg, "translated query was invalid");
            Err(DatastoreError::Unavailable)
        }
        Err(err) => Err(err),
    }
}

/// Picks an activity for the current context and words it. The returned
/// recommendation is not yet recorded anywhere.
#[allow(clippy::too_many_arguments)]
pub fn recommend(
    user: &UserId,
    rec_id: RecId,
    snapshot: &ContextSnapshot,
    message: &str,
    bandit: &BanditModel,
    thresholds: &TempThresholds,
    port: &dyn LlmPort,
    now: Timestamp,
) -> Result<Recommendation, OrchestratorError> {
    let x = featurize(snapshot, thresholds)?;
    let arm = bandit.select(x.as_slice())?;
    let request = TailorRequest {
        arm: &arm.name,
        context: snapshot,
        message,
    };
    let text = match port.tailor(&request) {
        Ok(text) if text.to_lowercase().contains(&arm.name.to_lowercase()) => text,
        Ok(_) => {
            tracing::warn!(arm = %arm.name, "tailored text dropped the activity, using template");
            MockLlm::tailor_text(&request)
        }
        Err(err) => {
            tracing::warn!(%err, "tailoring fell back to template");
            MockLlm::tailor_text(&request)
        }
    };
    Ok(Recommendation {
        rec_id,
        user_id: user.clone(),
        arm,
        context_vector: x,
        issued_at: now,
        tailored_text: text,
        reward_attributed: false,
        degraded_context: snapshot.degraded,
    })
}

pub fn compose_response(parts: &ReplyParts, port: &dyn LlmPort) -> String {
    match port.compose(parts) {
        Ok(text) if !text.trim().is_empty() => text,
        Ok(_) => MockLlm::compose_text(parts),
        Err(err) => {
            tracing::warn!(%err, "compose fell back to template");
            MockLlm::compose_text(parts)
        }
    }
}
