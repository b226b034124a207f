use std::sync::Arc;

use log::warn;

use super::MoEnv;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// Observation after the step; for a finished episode this is the final
    /// observation of that episode, not the reset state.
    pub obs: Vec<f64>,
    pub reward: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// One environment copy with its own state, step counter and random stream.
#[derive(Clone, Debug)]
pub struct EnvInstance {
    state: Vec<f64>,
    steps: usize,
    rng: Rng,
}

impl EnvInstance {
    pub fn new(env: &dyn MoEnv, mut rng: Rng) -> Self {
        let state = env.initial_state(&mut rng);
        EnvInstance {
            state,
            steps: 0,
            rng,
        }
    }

    pub fn observe(&self, env: &dyn MoEnv) -> Vec<f64> {
        env.observe(&self.state)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Steps once; auto-resets after a terminal or truncated step. The second
    /// value reports whether the action had to be clipped into [−1, 1].
    pub fn step(&mut self, env: &dyn MoEnv, action: &[f64]) -> Result<(StepResult, bool)> {
        let spec = env.spec();
        if action.len() != spec.act_dim {
            return Err(Error::shape("environment action", spec.act_dim, action.len()));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::numeric(format!("action {action:?}")));
        }
        let clipped = action.iter().any(|a| a.abs() > 1.0);
        let action: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        let tr = env.transition(&mut self.state, &action);
        self.steps += 1;
        let terminated = tr.terminated;
        let truncated = !terminated && self.steps >= spec.max_episode_steps;
        let obs = env.observe(&self.state);
        if terminated || truncated {
            self.state = env.initial_state(&mut self.rng);
            self.steps = 0;
        }
        Ok((
            StepResult {
                obs,
                reward: tr.reward,
                terminated,
                truncated,
            },
            clipped,
        ))
    }
}

/// `N` independent instances of one environment stepped in lock-step.
#[derive(Debug)]
pub struct BatchedEnv {
    env: Arc<dyn MoEnv>,
    instances: Vec<EnvInstance>,
    clipped_actions: u64,
}

impl BatchedEnv {
    /// Instance `i` draws from `rng.derive(i)`.
    pub fn new(env: Arc<dyn MoEnv>, num_envs: usize, rng: &Rng) -> Self {
        let instances = (0..num_envs)
            .map(|i| EnvInstance::new(env.as_ref(), rng.derive(i as u64)))
            .collect();
        BatchedEnv {
            env,
            instances,
            clipped_actions: 0,
        }
    }

    pub fn env(&self) -> &Arc<dyn MoEnv> {
        &self.env
    }

    pub fn num_envs(&self) -> usize {
        self.instances.len()
    }

    /// Re-seeds every instance from `rng` and returns the fresh observations.
    pub fn reset(&mut self, rng: &Rng) -> Vec<Vec<f64>> {
        let n = self.instances.len();
        *self = BatchedEnv::new(self.env.clone(), n, rng);
        self.observations()
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        self.instances
            .iter()
            .map(|inst| inst.observe(self.env.as_ref()))
            .collect()
    }

    pub fn step(&mut self, actions: &[Vec<f64>]) -> Result<Vec<StepResult>> {
        if actions.len() != self.instances.len() {
            return Err(Error::shape("batched actions", self.instances.len(), actions.len()));
        }
        let env = self.env.clone();
        let mut out = Vec::with_capacity(actions.len());
        for (inst, action) in self.instances.iter_mut().zip(actions) {
            let (res, clipped) = inst.step(env.as_ref(), action)?;
            self.clipped_actions += clipped as u64;
            out.push(res);
        }
        Ok(out)
    }

    /// Disjoint access for data-parallel rollouts.
    pub fn split_mut(&mut self) -> (&dyn MoEnv, &mut [EnvInstance]) {
        (self.env.as_ref(), &mut self.instances)
    }

    pub fn record_clipped(&mut self, count: u64) {
        if count > 0 && self.clipped_actions == 0 {
            warn!("actions outside [-1, 1] were clipped");
        }
        self.clipped_actions += count;
    }

    pub fn clipped_actions(&self) -> u64 {
        self.clipped_actions
    }
}
