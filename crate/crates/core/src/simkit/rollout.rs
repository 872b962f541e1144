use std::fmt;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::env::{SyntheticEnv, N_CONTEXTS};
use super::SimError;
use crate::bandit::BanditModel;
use crate::context::{ContextVector, CONTEXT_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    LinUcb { alpha: f64 },
    /// Context-free sample-mean greedy with uniform exploration.
    EpsilonGreedy { epsilon: f64 },
    Random,
    /// Always plays the arm with the highest true expectation.
    Oracle,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::LinUcb { .. } => "linucb",
            Self::EpsilonGreedy { .. } => "epsilon_greedy",
            Self::Random => "random",
            Self::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Flat context index (see [`ContextVector::from_flat_index`]).
    pub context: usize,
    pub arm: usize,
    pub observed_reward: f64,
    pub expected_reward: f64,
    pub optimal_reward: f64,
    pub optimal_arm: usize,
}

impl Step {
    pub fn context_vector(&self) -> ContextVector {
        ContextVector::from_flat_index(self.context)
    }

    pub fn regret(&self) -> f64 {
        self.optimal_reward - self.expected_reward
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub policy: Policy,
    pub seed: u64,
    pub steps: Vec<Step>,
}

enum Learner {
    LinUcb(BanditModel),
    Greedy { epsilon: f64, pulls: Vec<u64>, sums: Vec<f64> },
    Random,
    Oracle,
}

/// Rolls `policy` out for `n_rounds` on `env`. Contexts and reward noise come
/// from one RNG stream seeded by `seed`, policy randomness from another, so
/// every policy sees the same context sequence for a given seed.
pub fn run_policy(env: &SyntheticEnv, policy: Policy, n_rounds: usize, seed: u64) -> Result<Trajectory, SimError> {
    env.validate()?;
    if n_rounds == 0 {
        return Err(SimError::NoRounds);
    }
    let k = env.n_arms();
    let mut learner = match policy {
        Policy::LinUcb { alpha } => Learner::LinUcb(BanditModel::new(&env.arms, CONTEXT_DIM, alpha, seed)?),
        Policy::EpsilonGreedy { epsilon } => {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(SimError::InvalidPolicy(format!("epsilon {epsilon} outside [0, 1]")));
            }
            Learner::Greedy {
                epsilon,
                pulls: vec![0; k],
                sums: vec![0.0; k],
            }
        }
        Policy::Random => Learner::Random,
        Policy::Oracle => Learner::Oracle,
    };

    let weights = env.context_weights.clone().unwrap_or_else(|| vec![1.0; N_CONTEXTS]);
    let contexts = WeightedIndex::new(&weights).map_err(|e| SimError::InvalidEnv(e.to_string()))?;
    let noise = Normal::new(0.0, env.noise_sd).map_err(|e| SimError::InvalidEnv(e.to_string()))?;
    let mut world = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_C3C3_3C3C);

    let mut steps = Vec::with_capacity(n_rounds);
    for _ in 0..n_rounds {
        let ctx = contexts.sample(&mut world);
        let x = ContextVector::from_flat_index(ctx);
        let (optimal_arm, optimal_reward) = env.optimal(&x);
        let arm = match &learner {
            Learner::LinUcb(model) => model.select(x.as_slice())?.index,
            Learner::Greedy { epsilon, pulls, sums } => {
                if agent.random::<f64>() < *epsilon {
                    agent.random_range(0..k)
                } else if let Some(unpulled) = pulls.iter().position(|p| *p == 0) {
                    unpulled
                } else {
                    (0..k)
                        .map(|a| (a, sums[a] / pulls[a] as f64))
                        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
                        .0
                }
            }
            Learner::Random => agent.random_range(0..k),
            Learner::Oracle => optimal_arm,
        };
        let expected_reward = env.expected_reward(arm, &x);
        let observed_reward = (expected_reward + noise.sample(&mut world)).clamp(0.0, 1.0);
        match &mut learner {
            Learner::LinUcb(model) => {
                let id = model.arms()[arm].id.clone();
                model.update(&id, x.as_slice(), observed_reward)?;
            }
            Learner::Greedy { pulls, sums, .. } => {
                pulls[arm] += 1;
                sums[arm] += observed_reward;
            }
            Learner::Random | Learner::Oracle => {}
        }
        steps.push(Step {
            context: ctx,
            arm,
            observed_reward,
            expected_reward,
            optimal_reward,
            optimal_arm,
        });
    }
    Ok(Trajectory { policy, seed, steps })
}

/// Prefix sums of per-step regret against true expectations.
pub fn cumulative_regret(trajectory: &Trajectory) -> Vec<f64> {
    trajectory
        .steps
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.regret();
            Some(*acc)
        })
        .collect()
}

/// Fraction of optimal choices over the trailing `tail_fraction` of the run.
pub fn optimal_rate(trajectory: &Trajectory, tail_fraction: f64) -> f64 {
    let n = trajectory.steps.len();
    let take = ((n as f64) * tail_fraction).ceil().max(1.0) as usize;
    let tail = &trajectory.steps[n.saturating_sub(take)..];
    tail.iter().filter(|s| s.arm == s.optimal_arm).count() as f64 / tail.len() as f64
}

/// Writes `seed,round,policy,cumulative_regret` rows (rounds are 1-based).
pub fn write_regret_csv<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "round", "policy", "cumulative_regret"])?;
    for t in trajectories {
        for (round, regret) in cumulative_regret(t).into_iter().enumerate() {
            w.write_record([
                t.seed.to_string(),
                (round + 1).to_string(),
                t.policy.name().to_string(),
                regret.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
