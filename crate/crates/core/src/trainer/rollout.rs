use rayon::prelude::*;

use crate::envs::{BatchedEnv, EnvInstance, MoEnv};
use crate::error::{Error, Result};
use crate::hypernet::{hypernet_forward, HypernetParams, HypernetSpec, TargetSpec};
use crate::nn::{self, MlpSpec, PolicySpec};
use crate::rng::Rng;
use crate::simplex::TradeoffVector;

/// On-policy data from `N` environments over `T` steps, stored env-major:
/// row `i·T + t` is step `t` of environment `i`.
#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub num_envs: usize,
    pub steps: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub objectives: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub logprobs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// V(s_t) per objective.
    pub values: Vec<f64>,
    /// Critic value of the observation reported by step `t`: the next state
    /// within an episode, or the final state of a finished one. Row `T − 1`
    /// holds the bootstrap value.
    pub next_values: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub tradeoffs: Vec<TradeoffVector>,
    /// Index of each environment's trade-off among the distinct ones.
    pub cluster_of_env: Vec<usize>,
    /// Undiscounted returns of episodes that finished during this rollout,
    /// per environment.
    pub finished_returns: Vec<Vec<Vec<f64>>>,
}

impl RolloutBatch {
    pub fn rows(&self) -> usize {
        self.num_envs * self.steps
    }

    pub fn env_of_row(&self, row: usize) -> usize {
        row / self.steps
    }

    pub fn obs_row(&self, row: usize) -> &[f64] {
        &self.obs[row * self.obs_dim..(row + 1) * self.obs_dim]
    }

    pub fn action_row(&self, row: usize) -> &[f64] {
        &self.actions[row * self.act_dim..(row + 1) * self.act_dim]
    }

    pub fn reward_row(&self, row: usize) -> &[f64] {
        &self.rewards[row * self.objectives..(row + 1) * self.objectives]
    }

    pub fn value_row(&self, row: usize) -> &[f64] {
        &self.values[row * self.objectives..(row + 1) * self.objectives]
    }

    pub fn tradeoff_of_row(&self, row: usize) -> &TradeoffVector {
        &self.tradeoffs[self.env_of_row(row)]
    }

    /// Distinct trade-offs, indexed by cluster id.
    pub fn distinct_tradeoffs(&self) -> Vec<&TradeoffVector> {
        let k = self.cluster_of_env.iter().copied().max().map_or(0, |c| c + 1);
        (0..k)
            .map(|c| {
                let i = self.cluster_of_env.iter().position(|&x| x == c).unwrap();
                &self.tradeoffs[i]
            })
            .collect()
    }

    pub(crate) fn check(&self) -> Result<()> {
        let rows = self.rows();
        let lens = [
            (self.obs.len(), rows * self.obs_dim),
            (self.actions.len(), rows * self.act_dim),
            (self.logprobs.len(), rows),
            (self.rewards.len(), rows * self.objectives),
            (self.values.len(), rows * self.objectives),
            (self.next_values.len(), rows * self.objectives),
            (self.terminated.len(), rows),
            (self.truncated.len(), rows),
            (self.tradeoffs.len(), self.num_envs),
            (self.cluster_of_env.len(), self.num_envs),
        ];
        for (actual, expected) in lens {
            if actual != expected {
                return Err(Error::shape("rollout batch", expected, actual));
            }
        }
        Ok(())
    }
}

/// Cluster ids by first occurrence of each distinct trade-off.
pub fn cluster_ids(tradeoffs: &[TradeoffVector]) -> Vec<usize> {
    let mut distinct: Vec<&TradeoffVector> = Vec::new();
    tradeoffs
        .iter()
        .map(|w| match distinct.iter().position(|d| *d == w) {
            Some(c) => c,
            None => {
                distinct.push(w);
                distinct.len() - 1
            }
        })
        .collect()
}

pub(crate) fn actor_spec(spec: &HypernetSpec) -> Result<&PolicySpec> {
    match spec.target() {
        TargetSpec::Actor(p) => Ok(p),
        TargetSpec::Critic(_) => Err(Error::Config("expected an actor hypernetwork".into())),
    }
}

pub(crate) fn critic_spec(spec: &HypernetSpec) -> Result<&MlpSpec> {
    match spec.target() {
        TargetSpec::Critic(c) => Ok(c),
        TargetSpec::Actor(_) => Err(Error::Config("expected a critic hypernetwork".into())),
    }
}

/// Generated parameters for each distinct trade-off.
pub(crate) fn generate_per_cluster(
    spec: &HypernetSpec,
    hp: &HypernetParams,
    tradeoffs: &[TradeoffVector],
    cluster_of_env: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let k = cluster_of_env.iter().copied().max().map_or(0, |c| c + 1);
    (0..k)
        .map(|c| {
            let i = cluster_of_env.iter().position(|&x| x == c).unwrap();
            hypernet_forward(spec, hp, &tradeoffs[i])
        })
        .collect()
}

struct EnvTrajectory {
    obs: Vec<f64>,
    actions: Vec<f64>,
    logprobs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    next_values: Vec<f64>,
    terminated: Vec<bool>,
    truncated: Vec<bool>,
    finished: Vec<Vec<f64>>,
    clipped: u64,
}

#[allow(clippy::too_many_arguments)]
fn roll_one(
    env: &dyn MoEnv,
    inst: &mut EnvInstance,
    policy: &PolicySpec,
    theta: &[f64],
    critic: &MlpSpec,
    phi: &[f64],
    steps: usize,
    mut rng: Rng,
    running: &mut Vec<f64>,
    env_index: usize,
) -> Result<EnvTrajectory> {
    let spec = env.spec();
    let m = spec.objectives;
    let mut tr = EnvTrajectory {
        obs: Vec::with_capacity(steps * spec.obs_dim),
        actions: Vec::with_capacity(steps * spec.act_dim),
        logprobs: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps * m),
        values: Vec::with_capacity(steps * m),
        next_values: vec![0.0; steps * m],
        terminated: Vec::with_capacity(steps),
        truncated: Vec::with_capacity(steps),
        finished: Vec::new(),
        clipped: 0,
    };
    let at = |t: usize, e: Error| match e {
        Error::Numeric { context } => {
            Error::numeric(format!("environment {env_index}, step {t}: {context}"))
        }
        other => other,
    };
    let mut obs = inst.observe(env);
    let mut awaiting_next = false;
    for t in 0..steps {
        let dist = nn::policy_forward(policy, theta, &obs).map_err(|e| at(t, e))?;
        let (action, logprob) = nn::sample_and_logprob(&mut rng, &dist);
        let value = nn::critic_forward(critic, phi, &obs).map_err(|e| at(t, e))?;
        if awaiting_next {
            tr.next_values[(t - 1) * m..t * m].copy_from_slice(&value);
        }
        let (res, clipped) = inst.step(env, &action).map_err(|e| at(t, e))?;
        tr.clipped += clipped as u64;
        tr.obs.extend_from_slice(&obs);
        tr.actions.extend_from_slice(&action);
        tr.logprobs.push(logprob);
        tr.rewards.extend_from_slice(&res.reward);
        tr.values.extend_from_slice(&value);
        tr.terminated.push(res.terminated);
        tr.truncated.push(res.truncated);
        for (acc, r) in running.iter_mut().zip(&res.reward) {
            *acc += r;
        }
        if res.done() {
            let final_value = nn::critic_forward(critic, phi, &res.obs).map_err(|e| at(t, e))?;
            tr.next_values[t * m..(t + 1) * m].copy_from_slice(&final_value);
            tr.finished.push(std::mem::replace(running, vec![0.0; m]));
            awaiting_next = false;
        } else {
            awaiting_next = true;
        }
        obs = inst.observe(env);
    }
    if awaiting_next {
        let bootstrap = nn::critic_forward(critic, phi, &obs).map_err(|e| at(steps, e))?;
        tr.next_values[(steps - 1) * m..].copy_from_slice(&bootstrap);
    }
    Ok(tr)
}

/// Steps every environment `steps` times under its own generated policy
/// `H_π(w_i)`, evaluating `H_V(w_i)` at each visited state.
///
/// `episode_returns` carries each environment's partial episode return
/// across calls. Environment `i` samples actions from `rng.derive(i)`, so the
/// batch does not depend on whether environments run in parallel.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts(
    actor: (&HypernetSpec, &HypernetParams),
    critic: (&HypernetSpec, &HypernetParams),
    env: &mut BatchedEnv,
    tradeoffs: &[TradeoffVector],
    steps: usize,
    rng: &Rng,
    episode_returns: &mut [Vec<f64>],
    parallel: bool,
) -> Result<RolloutBatch> {
    let n = env.num_envs();
    if tradeoffs.len() != n {
        return Err(Error::shape("rollout trade-offs", n, tradeoffs.len()));
    }
    if episode_returns.len() != n {
        return Err(Error::shape("episode return accumulators", n, episode_returns.len()));
    }
    if steps == 0 {
        return Err(Error::Config("rollout length must be positive".into()));
    }
    let policy = actor_spec(actor.0)?;
    let value_net = critic_spec(critic.0)?;
    let cluster_of_env = cluster_ids(tradeoffs);
    let thetas = generate_per_cluster(actor.0, actor.1, tradeoffs, &cluster_of_env)?;
    let phis = generate_per_cluster(critic.0, critic.1, tradeoffs, &cluster_of_env)?;

    let (env_ref, instances) = env.split_mut();
    let spec = env_ref.spec().clone();
    let work = |(i, (inst, running)): (usize, (&mut EnvInstance, &mut Vec<f64>))| {
        let c = cluster_of_env[i];
        roll_one(
            env_ref,
            inst,
            policy,
            &thetas[c],
            value_net,
            &phis[c],
            steps,
            rng.derive(i as u64),
            running,
            i,
        )
    };
    let trajectories: Vec<Result<EnvTrajectory>> = if parallel {
        instances
            .par_iter_mut()
            .zip(episode_returns.par_iter_mut())
            .enumerate()
            .map(work)
            .collect()
    } else {
        instances
            .iter_mut()
            .zip(episode_returns.iter_mut())
            .enumerate()
            .map(work)
            .collect()
    };

    let mut batch = RolloutBatch {
        num_envs: n,
        steps,
        obs_dim: spec.obs_dim,
        act_dim: spec.act_dim,
        objectives: spec.objectives,
        obs: Vec::with_capacity(n * steps * spec.obs_dim),
        actions: Vec::with_capacity(n * steps * spec.act_dim),
        logprobs: Vec::with_capacity(n * steps),
        rewards: Vec::with_capacity(n * steps * spec.objectives),
        values: Vec::with_capacity(n * steps * spec.objectives),
        next_values: Vec::with_capacity(n * steps * spec.objectives),
        terminated: Vec::with_capacity(n * steps),
        truncated: Vec::with_capacity(n * steps),
        tradeoffs: tradeoffs.to_vec(),
        cluster_of_env,
        finished_returns: Vec::with_capacity(n),
    };
    let mut clipped = 0;
    for tr in trajectories {
        let tr = tr?;
        batch.obs.extend(tr.obs);
        batch.actions.extend(tr.actions);
        batch.logprobs.extend(tr.logprobs);
        batch.rewards.extend(tr.rewards);
        batch.values.extend(tr.values);
        batch.next_values.extend(tr.next_values);
        batch.terminated.extend(tr.terminated);
        batch.truncated.extend(tr.truncated);
        batch.finished_returns.push(tr.finished);
        clipped += tr.clipped;
    }
    env.record_clipped(clipped);
    Ok(batch)
}
