use std::collections::BTreeMap;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{BanditError, BanditModel};
use crate::context::ContextVector;
use crate::domain::{ArmId, RecId, Recommendation, SleepRecord, Timestamp, UserId};

/// Default attribution window after a recommendation is issued.
pub const DEFAULT_EXPIRY_HOURS: i64 = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingReward {
    pub rec_id: RecId,
    pub user_id: UserId,
    pub arm: ArmId,
    pub context_vector: ContextVector,
    pub issued_at: Timestamp,
    /// Attribution window in seconds.
    pub expires_after_secs: i64,
}

impl PendingReward {
    pub fn expires_after(&self) -> Duration {
        Duration::seconds(self.expires_after_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceEntry {
    pub rec_id: RecId,
    pub followed: bool,
    pub recorded_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedUpdate {
    pub rec_id: RecId,
    pub arm: String,
    pub reward: f64,
    pub sleep_day: chrono::NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown recommendation `{0}`")]
    UnknownRec(RecId),
    #[error("recommendation `{0}` already has a pending reward")]
    DuplicatePending(RecId),
}

/// Per-user recommendation bookkeeping: issued recommendations, rewards
/// still waiting for a night of sleep, and adherence answers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PendingLedger {
    pub next_seq: u64,
    pub pending: Vec<PendingReward>,
    pub recommendations: BTreeMap<RecId, Recommendation>,
    pub adherence: Vec<AdherenceEntry>,
}

impl PendingLedger {
    pub fn next_rec_id(&self, user: &UserId) -> RecId {
        RecId(format!("rec-{}-{:05}", user.as_str(), self.next_seq + 1))
    }

    /// Records a recommendation together with its pending reward.
    pub fn issue(&mut self, rec: Recommendation, expires_after: Duration) -> Result<(), LedgerError> {
        if self.recommendations.contains_key(&rec.rec_id) {
            return Err(LedgerError::DuplicatePending(rec.rec_id));
        }
        self.next_seq += 1;
        self.pending.push(PendingReward {
            rec_id: rec.rec_id.clone(),
            user_id: rec.user_id.clone(),
            arm: rec.arm.clone(),
            context_vector: rec.context_vector.clone(),
            issued_at: rec.issued_at,
            expires_after_secs: expires_after.num_seconds(),
        });
        self.recommendations.insert(rec.rec_id.clone(), rec);
        Ok(())
    }

    pub fn record_adherence(&mut self, rec_id: &RecId, followed: bool, at: Timestamp) -> Result<(), LedgerError> {
        if !self.recommendations.contains_key(rec_id) {
            return Err(LedgerError::UnknownRec(rec_id.clone()));
        }
        self.adherence.push(AdherenceEntry {
            rec_id: rec_id.clone(),
            followed,
            recorded_at: at,
        });
        Ok(())
    }
}

/// Applies the night's sleep score to every pending recommendation issued
/// before `sleep.bedtime_start` and no more than its window earlier. Those
/// are consumed; pendings whose window closed before this bedtime are
/// dropped without an update; later ones wait for a later night.
pub fn attribute_rewards(
    ledger: &mut PendingLedger,
    sleep: &SleepRecord,
    bandit: &mut BanditModel,
) -> Result<Vec<AppliedUpdate>, BanditError> {
    let reward = (f64::from(sleep.sleep_score) / 100.0).clamp(0.0, 1.0);
    let mut applied = Vec::new();
    let mut keep = Vec::with_capacity(ledger.pending.len());
    let mut queue = std::mem::take(&mut ledger.pending).into_iter();
    while let Some(p) = queue.next() {
        if p.issued_at >= sleep.bedtime_start {
            keep.push(p);
            continue;
        }
        if sleep.bedtime_start - p.issued_at > p.expires_after() {
            tracing::debug!(rec_id = %p.rec_id, "pending reward expired");
            continue;
        }
        let already = ledger
            .recommendations
            .get(&p.rec_id)
            .is_some_and(|r| r.reward_attributed);
        if already {
            continue;
        }
        if let Err(err) = bandit.update(&p.arm, p.context_vector.as_slice(), reward) {
            // Updates already applied stay consumed; this one and the rest wait.
            keep.push(p);
            keep.extend(queue);
            ledger.pending = keep;
            return Err(err);
        }
        if let Some(rec) = ledger.recommendations.get_mut(&p.rec_id) {
            rec.mark_attributed();
        }
        applied.push(AppliedUpdate {
            rec_id: p.rec_id,
            arm: p.arm.name,
            reward,
            sleep_day: sleep.day,
        });
    }
    ledger.pending = keep;
    Ok(applied)
}
