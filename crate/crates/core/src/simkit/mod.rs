//! Offline validation harness: synthetic users with known per-arm reward
//! weights, policy rollouts, regret, engagement metrics and the statistics
//! used to analyze study data.

mod engagement;
mod env;
mod rollout;
pub mod stats;

pub use engagement::{engagement_metrics, Engagement};
pub use env::{SyntheticEnv, DEFAULT_ENV_JSON, N_CONTEXTS};
pub use rollout::{cumulative_regret, optimal_rate, run_policy, write_regret_csv, Policy, Step, Trajectory};
pub use stats::{
    least_squares, ols_trend, paired_t_test, wilcoxon_exact, wilcoxon_normal, wilcoxon_signed_rank, Regression,
    StatReport, StatsError, WILCOXON_EXACT_MAX_N,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
    #[error("n_rounds must be at least 1")]
    NoRounds,
    #[error("policy parameter out of range: {0}")]
    InvalidPolicy(String),
    #[error("phase is empty")]
    EmptyPhase,
    #[error(transparent)]
    Bandit(#[from] crate::bandit::BanditError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
