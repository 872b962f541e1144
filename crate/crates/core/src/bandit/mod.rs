//! Disjoint LinUCB.
//!
//! Each arm keeps a Gram matrix `A = I + Σ x xᵀ` and a reward vector
//! `b = Σ r x`. For a context `x` the arm is scored as
//!
//! ```text
//! estimate    = θᵀx         where A θ = b
//! uncertainty = √(xᵀ A⁻¹ x)
//! ucb         = estimate + α · uncertainty
//! ```
//!
//! and the arm with the largest `ucb` is selected. `θ` and `A⁻¹x` are
//! obtained by triangular solves against a Cholesky factor that is refreshed
//! on every update; no inverse is ever formed.

mod linalg;
mod state;

pub(crate) use linalg::dot as linalg_dot;
pub use state::{load_state, save_state, STATE_FORMAT, STATE_VERSION};

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ArmId;

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_ARMS: [&str; 5] = ["gym", "walking", "yoga", "reading", "meditation"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BanditError {
    #[error("arm set is empty")]
    EmptyArmSet,
    #[error("duplicate arm `{0}`")]
    DuplicateArm(String),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("dimension mismatch: model has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("context contains a non-finite value")]
    NonFiniteContext,
    #[error("unknown arm `{0}`")]
    UnknownArm(String),
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("corrupt bandit state: {0}")]
    CorruptState(String),
    #[error("gram matrix of arm `{0}` lost positive definiteness")]
    NotPositiveDefinite(String),
}

/// Per-arm sufficient statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmState {
    /// Row-major `dim * dim`.
    gram: Vec<f64>,
    reward_vec: Vec<f64>,
    update_count: u64,
    #[serde(skip)]
    factor: Vec<f64>,
}

impl PartialEq for ArmState {
    fn eq(&self, other: &Self) -> bool {
        self.gram == other.gram && self.reward_vec == other.reward_vec && self.update_count == other.update_count
    }
}

impl ArmState {
    fn fresh(dim: usize) -> Self {
        let mut gram = vec![0.0; dim * dim];
        for i in 0..dim {
            gram[i * dim + i] = 1.0;
        }
        // Identity is its own factor.
        let factor = gram.clone();
        Self {
            gram,
            reward_vec: vec![0.0; dim],
            update_count: 0,
            factor,
        }
    }

    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn reward_vec(&self) -> &[f64] {
        &self.reward_vec
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub(crate) fn refactor(&mut self, dim: usize) -> bool {
        match linalg::cholesky(&self.gram, dim) {
            Some(l) => {
                self.factor = l;
                true
            }
            None => false,
        }
    }

    /// θ solving `A θ = b`.
    pub fn theta(&self) -> Vec<f64> {
        let dim = self.reward_vec.len();
        linalg::solve(&self.factor, dim, &self.reward_vec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub id: ArmId,
    pub state: ArmState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmScore {
    pub arm_index: usize,
    pub estimate: f64,
    pub uncertainty: f64,
    pub ucb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditModel {
    arms: Vec<Arm>,
    alpha: f64,
    dim: usize,
    rng_seed: u64,
}

impl BanditModel {
    pub fn new<S: AsRef<str>>(arm_names: &[S], dim: usize, alpha: f64, seed: u64) -> Result<Self, BanditError> {
        if arm_names.is_empty() {
            return Err(BanditError::EmptyArmSet);
        }
        if dim == 0 {
            return Err(BanditError::ZeroDimension);
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(BanditError::InvalidAlpha(alpha));
        }
        let mut seen = HashSet::new();
        let mut arms = Vec::with_capacity(arm_names.len());
        for (index, name) in arm_names.iter().enumerate() {
            let name = name.as_ref();
            if !seen.insert(name) {
                return Err(BanditError::DuplicateArm(name.to_string()));
            }
            arms.push(Arm {
                id: ArmId {
                    name: name.to_string(),
                    index,
                },
                state: ArmState::fresh(dim),
            });
        }
        Ok(Self {
            arms,
            alpha,
            dim,
            rng_seed: seed,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn arm_ids(&self) -> impl Iterator<Item = &ArmId> {
        self.arms.iter().map(|a| &a.id)
    }

    pub fn arm_by_name(&self, name: &str) -> Option<&ArmId> {
        self.arms.iter().map(|a| &a.id).find(|id| id.name == name)
    }

    pub fn total_updates(&self) -> u64 {
        self.arms.iter().map(|a| a.state.update_count).sum()
    }

    fn check_context(&self, x: &[f64]) -> Result<(), BanditError> {
        if x.len() != self.dim {
            return Err(BanditError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(BanditError::NonFiniteContext);
        }
        Ok(())
    }

    fn score_arm(&self, arm: &Arm, x: &[f64]) -> ArmScore {
        let dim = self.dim;
        let state = &arm.state;
        let theta = state.theta();
        let estimate = linalg::dot(&theta, x);
        // xᵀA⁻¹x = ‖L⁻¹x‖²
        let y = linalg::forward_sub(&state.factor, dim, x);
        let uncertainty = linalg::dot(&y, &y).max(0.0).sqrt();
        ArmScore {
            arm_index: arm.id.index,
            estimate,
            uncertainty,
            ucb: estimate + self.alpha * uncertainty,
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<Vec<ArmScore>, BanditError> {
        self.check_context(x)?;
        Ok(self.arms.iter().map(|arm| self.score_arm(arm, x)).collect())
    }

    /// Arm with the largest UCB. Ties are broken uniformly at random by an RNG
    /// derived from the seed, the number of updates applied so far and `x`,
    /// so the choice is a pure function of model state and context.
    pub fn select(&self, x: &[f64]) -> Result<ArmId, BanditError> {
        let scores = self.score(x)?;
        let best = scores.iter().map(|s| s.ucb).fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * best.abs().max(1.0);
        let tied: Vec<usize> = scores
            .iter()
            .filter(|s| best - s.ucb <= tol)
            .map(|s| s.arm_index)
            .collect();
        let pick = if tied.len() == 1 {
            tied[0]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.tie_seed(x));
            tied[rng.random_range(0..tied.len())]
        };
        Ok(self.arms[pick].id.clone())
    }

    fn tie_seed(&self, x: &[f64]) -> u64 {
        let mut h = splitmix(self.rng_seed ^ splitmix(self.total_updates()));
        for v in x {
            h = splitmix(h ^ v.to_bits());
        }
        h
    }

    fn resolve(&self, arm: &ArmId) -> Result<usize, BanditError> {
        match self.arms.get(arm.index) {
            Some(a) if a.id.name == arm.name => Ok(arm.index),
            _ => Err(BanditError::UnknownArm(arm.name.clone())),
        }
    }

    /// `A += x xᵀ`, `b += r x` for the chosen arm only.
    pub fn update(&mut self, arm: &ArmId, x: &[f64], reward: f64) -> Result<(), BanditError> {
        let idx = self.resolve(arm)?;
        self.check_context(x)?;
        if !(0.0..=1.0).contains(&reward) {
            return Err(BanditError::RewardOutOfRange(reward));
        }
        let dim = self.dim;
        let state = &mut self.arms[idx].state;
        let (old_gram, old_b) = (state.gram.clone(), state.reward_vec.clone());
        for i in 0..dim {
            for j in 0..dim {
                state.gram[i * dim + j] += x[i] * x[j];
            }
            state.reward_vec[i] += reward * x[i];
        }
        if !state.refactor(dim) {
            state.gram = old_gram;
            state.reward_vec = old_b;
            return Err(BanditError::NotPositiveDefinite(arm.name.clone()));
        }
        state.update_count += 1;
        Ok(())
    }

    /// Recomputes every cached factor; used after deserialization.
    pub(crate) fn rebuild_factors(&mut self) -> Result<(), BanditError> {
        let dim = self.dim;
        for arm in &mut self.arms {
            if arm.state.gram.len() != dim * dim || arm.state.reward_vec.len() != dim {
                return Err(BanditError::CorruptState(format!(
                    "arm `{}` has mismatched matrix sizes",
                    arm.id.name
                )));
            }
            if !arm.state.refactor(dim) {
                return Err(BanditError::NotPositiveDefinite(arm.id.name.clone()));
            }
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
