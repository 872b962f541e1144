use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::bandit::linalg_dot;
use crate::context::{ContextVector, CONTEXT_DIM, TEMP_BINS, TIME_BINS, WEATHER_BINS};

/// Number of distinct discrete contexts.
pub const N_CONTEXTS: usize = TIME_BINS * TEMP_BINS * WEATHER_BINS;

pub const DEFAULT_ENV_JSON: &str = include_str!("../../fixtures/default_env.json");

/// A synthetic user: each arm's expected reward in context `x` is
/// `clamp(θ*ᵀx, 0, 1)`; observations add Gaussian noise and are clamped again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEnv {
    pub arms: Vec<String>,
    pub true_weights: Vec<Vec<f64>>,
    pub noise_sd: f64,
    pub seed: u64,
    /// Unnormalized weights over the flat context index; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_weights: Option<Vec<f64>>,
}

impl SyntheticEnv {
    pub fn default_env() -> Self {
        serde_json::from_str(DEFAULT_ENV_JSON).expect("bundled default env is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let env: Self = serde_json::from_str(text)?;
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidEnv(m));
        if self.arms.is_empty() {
            return bad("no arms".into());
        }
        if self.true_weights.len() != self.arms.len() {
            return bad(format!("{} arms but {} weight vectors", self.arms.len(), self.true_weights.len()));
        }
        for (arm, w) in self.arms.iter().zip(&self.true_weights) {
            if w.len() != CONTEXT_DIM {
                return bad(format!("arm `{arm}` has {} weights, expected {CONTEXT_DIM}", w.len()));
            }
            if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad(format!("arm `{arm}` has a weight outside [0, 1]"));
            }
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return bad(format!("noise_sd {} must be finite and non-negative", self.noise_sd));
        }
        if let Some(cw) = &self.context_weights {
            if cw.len() != N_CONTEXTS || cw.iter().any(|w| !w.is_finite() || *w < 0.0) || cw.iter().sum::<f64>() <= 0.0 {
                return bad(format!("context_weights must be {N_CONTEXTS} non-negative weights with positive sum"));
            }
        }
        Ok(())
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn expected_reward(&self, arm: usize, context: &ContextVector) -> f64 {
        linalg_dot(&self.true_weights[arm], context.as_slice()).clamp(0.0, 1.0)
    }

    /// Best arm and its expected reward (lowest index on exact ties).
    pub fn optimal(&self, context: &ContextVector) -> (usize, f64) {
        (0..self.n_arms())
            .map(|a| (a, self.expected_reward(a, context)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
    }

    /// Smallest gap between the best and second-best arm over every context.
    pub fn best_arm_margin(&self) -> f64 {
        (0..N_CONTEXTS)
            .map(|i| {
                let x = ContextVector::from_flat_index(i);
                let mut r: Vec<f64> = (0..self.n_arms()).map(|a| self.expected_reward(a, &x)).collect();
                r.sort_by(|a, b| b.total_cmp(a));
                if r.len() > 1 {
                    r[0] - r[1]
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}
