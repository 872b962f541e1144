use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::datastore::DateRange;
use crate::domain::{Role, Session};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    /// Days with at least one user message ÷ days in the phase.
    pub active_ratio: f64,
    /// Mean messages (both roles) per conversation; a conversation is one
    /// session's turns on one calendar day.
    pub mean_turns: f64,
    pub active_days: usize,
    pub conversations: usize,
}

pub fn engagement_metrics(sessions: &[Session], phase: DateRange) -> Result<Engagement, SimError> {
    let phase_days = phase.days();
    if phase_days == 0 {
        return Err(SimError::EmptyPhase);
    }
    let mut active = BTreeSet::new();
    let mut conversations: BTreeMap<(usize, chrono::NaiveDate), usize> = BTreeMap::new();
    for (i, session) in sessions.iter().enumerate() {
        for turn in &session.turns {
            let day = turn.timestamp.date_naive();
            if !phase.contains(day) {
                continue;
            }
            if turn.role == Role::User {
                active.insert(day);
            }
            *conversations.entry((i, day)).or_default() += 1;
        }
    }
    let mean_turns = if conversations.is_empty() {
        0.0
    } else {
        conversations.values().sum::<usize>() as f64 / conversations.len() as f64
    };
    Ok(Engagement {
        active_ratio: active.len() as f64 / phase_days as f64,
        mean_turns,
        active_days: active.len(),
        conversations: conversations.len(),
    })
}
