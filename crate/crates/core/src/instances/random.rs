//! Seeded random instances.
//!
//! The generator is ChaCha8 seeded through `seed_from_u64`, so an identical
//! spec yields a bit-identical model on every platform. Draw order: for each
//! state, for each action, the row weights over next states, then the reward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarMdpError};
use crate::mdp::{FiniteMdp, MdpBuilder, Resolution};

/// Distribution of the immediate reward of each pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RewardModel {
    /// Uniform on `[lo, hi)` at full double precision; no resolution declared.
    ContinuousUniform { lo: f64, hi: f64 },
    /// Uniform on `{0, .., max}` with resolution 1.
    IntegerUniform { max: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub reward_model: RewardModel,
    pub seed: u64,
    /// Probability that a transition entry is positive.
    #[serde(default = "full_density")]
    pub density: f64,
}

fn full_density() -> f64 {
    1.0
}

impl RandomSpec {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        reward_model: RewardModel,
        seed: u64,
    ) -> Self {
        Self {
            num_states,
            num_actions,
            reward_model,
            seed,
            density: 1.0,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(VarMdpError::Malformed(m));
        if self.num_states == 0 || self.num_actions == 0 {
            return bad("random spec needs at least one state and one action".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density {} outside (0, 1]", self.density));
        }
        match self.reward_model {
            RewardModel::ContinuousUniform { lo, hi }
                if !(lo < hi && lo.is_finite() && hi.is_finite()) =>
            {
                bad(format!("reward range [{lo}, {hi}) is empty"))
            }
            RewardModel::IntegerUniform { max: 0 } => {
                bad("integer reward maximum must be at least 1".into())
            }
            _ => Ok(()),
        }
    }
}

/// Every action is admissible in every state; rows are normalized weights
/// drawn from `(0, 1]`, so with full density every policy is ergodic.
pub fn gen_random(spec: &RandomSpec) -> Result<FiniteMdp> {
    spec.check()?;
    let n = spec.num_states;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut builder = MdpBuilder::new(n, spec.num_actions);
    if let RewardModel::IntegerUniform { .. } = spec.reward_model {
        builder.set_resolution(Some(Resolution::integer()));
    }
    let mut weights = vec![0.0; n];
    for s in 0..n {
        for a in 0..spec.num_actions {
            for w in weights.iter_mut() {
                *w = 1.0 - rng.random::<f64>();
            }
            if spec.density < 1.0 {
                let mut any = false;
                for w in weights.iter_mut() {
                    if rng.random::<f64>() < spec.density {
                        any = true;
                    } else {
                        *w = 0.0;
                    }
                }
                if !any {
                    weights[rng.random_range(0..n)] = 1.0;
                }
            }
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
            let reward = match spec.reward_model {
                RewardModel::ContinuousUniform { lo, hi } => rng.random_range(lo..hi),
                RewardModel::IntegerUniform { max } => f64::from(rng.random_range(0..=max)),
            };
            builder.dense_pair(s, a, reward, &weights);
        }
    }
    builder.build()
}
