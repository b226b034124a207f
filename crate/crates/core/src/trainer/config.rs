use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::SamplingConfig;

/// How per-objective advantages are standardized before scalarization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageNorm {
    /// Each objective channel to zero mean and unit std over the batch.
    PerObjective,
    /// Each channel centred, all channels divided by one pooled std, so the
    /// relative scale of the objectives survives scalarization.
    Shared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Parallel environments (N).
    pub num_envs: usize,
    /// Distinct trade-offs per iteration (K).
    pub clusters: usize,
    /// Clusters pinned to simplex vertices (κ).
    pub extremes: usize,
    /// Steps collected per environment per iteration (T).
    pub rollout_len: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch_count: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy_coef: f64,
    pub iterations: usize,
    pub seed: u64,
    pub advantage_norm: AdvantageNorm,
    /// Global L2 clip on each hypernetwork gradient; 0 disables it.
    pub max_grad_norm: f64,
    /// Iterations between front evaluations for the archive metric.
    pub log_interval: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            num_envs: 64,
            clusters: 8,
            extremes: 2,
            rollout_len: 64,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatch_count: 8,
            actor_lr: 1e-5,
            critic_lr: 1e-3,
            entropy_coef: 0.0,
            iterations: 300,
            seed: 0,
            advantage_norm: AdvantageNorm::PerObjective,
            max_grad_norm: 0.0,
            log_interval: 10,
        }
    }
}

impl TrainerConfig {
    pub fn sampling(&self, objectives: usize) -> SamplingConfig {
        SamplingConfig {
            clusters: self.clusters,
            extremes: self.extremes,
            num_envs: self.num_envs,
            objectives,
        }
    }

    pub fn validate(&self, objectives: usize) -> Result<()> {
        self.sampling(objectives).validate()?;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be positive");
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.entropy_coef >= 0.0) {
            return bad("entropy_coef must be nonnegative");
        }
        if !(self.max_grad_norm >= 0.0) {
            return bad("max_grad_norm must be nonnegative");
        }
        if self.rollout_len == 0 || self.epochs == 0 || self.minibatch_count == 0 {
            return bad("rollout_len, epochs and minibatch_count must be positive");
        }
        if self.minibatch_count > self.num_envs * self.rollout_len {
            return bad("minibatch_count exceeds the number of collected transitions");
        }
        if self.log_interval == 0 {
            return bad("log_interval must be positive");
        }
        Ok(())
    }
}

/// Sizes of the hypernetworks and of the networks they generate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Feature dimension F of `f(w)`.
    pub feature_dim: usize,
    pub feature_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Initial log-std of the generated policies.
    pub init_log_std: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            feature_dim: 16,
            feature_hidden: vec![16, 16],
            actor_hidden: vec![32, 32],
            critic_hidden: vec![32, 32],
            init_log_std: -0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub grid_resolution: usize,
    pub episodes_per_point: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            grid_resolution: 10,
            episodes_per_point: 8,
        }
    }
}
