use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::rollout::actor_spec;
use crate::envs::{make_env, EnvInstance, MoEnv};
use crate::error::{Error, Result};
use crate::hypernet::{hypernet_forward, HypernetParams, HypernetSpec};
use crate::nn;
use crate::rng::Rng;
use crate::simplex::{simplex_grid, TradeoffVector};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub tradeoff: TradeoffVector,
    /// Mean undiscounted return per objective.
    pub returns: Vec<f64>,
}

impl EvalRow {
    pub fn scalarized(&self) -> f64 {
        self.tradeoff.dot(&self.returns)
    }
}

/// Mean undiscounted return of `H_π(w)` acting with its deterministic mean
/// action. Episode `e` starts from the state drawn by `rng.derive(e)`, so
/// every trade-off sees the same initial states.
pub fn evaluate_tradeoff(
    spec: &HypernetSpec,
    hp: &HypernetParams,
    env: &dyn MoEnv,
    w: &TradeoffVector,
    episodes: usize,
    rng: &Rng,
) -> Result<Vec<f64>> {
    if episodes == 0 {
        return Err(Error::Config("episodes_per_point must be positive".into()));
    }
    let policy = actor_spec(spec)?;
    let theta = hypernet_forward(spec, hp, w)?;
    let m = env.spec().objectives;
    let mut total = vec![0.0; m];
    for e in 0..episodes {
        let mut inst = EnvInstance::new(env, rng.derive(e as u64));
        loop {
            let dist = nn::policy_forward(policy, &theta, &inst.observe(env))?;
            let (res, _) = inst.step(env, &dist.mean)?;
            for (acc, r) in total.iter_mut().zip(&res.reward) {
                *acc += r;
            }
            if res.done() {
                break;
            }
        }
    }
    Ok(total.into_iter().map(|x| x / episodes as f64).collect())
}

/// Evaluates each trade-off in parallel; results are independent of the
/// thread count.
pub fn evaluate_tradeoffs(
    spec: &HypernetSpec,
    hp: &HypernetParams,
    env: &dyn MoEnv,
    tradeoffs: &[TradeoffVector],
    episodes: usize,
    rng: &Rng,
) -> Result<Vec<EvalRow>> {
    tradeoffs
        .par_iter()
        .map(|w| {
            Ok(EvalRow {
                tradeoff: w.clone(),
                returns: evaluate_tradeoff(spec, hp, env, w, episodes, rng)?,
            })
        })
        .collect()
}

/// Evaluates a checkpoint over `simplex_grid(m, grid_resolution)`.
pub fn evaluate(
    ckpt: &Checkpoint,
    env_name: &str,
    grid_resolution: usize,
    episodes_per_point: usize,
    rng: &Rng,
) -> Result<Vec<EvalRow>> {
    if ckpt.env_name != env_name {
        return Err(Error::EnvMismatch {
            checkpoint: ckpt.env_name.clone(),
            requested: env_name.to_string(),
        });
    }
    let env = make_env(env_name)?;
    let m = env.spec().objectives;
    if ckpt.actor_spec.objectives() != m {
        return Err(Error::EnvMismatch {
            checkpoint: format!("{} ({} objectives)", ckpt.env_name, ckpt.actor_spec.objectives()),
            requested: format!("{env_name} ({m} objectives)"),
        });
    }
    let grid = if m == 1 {
        vec![TradeoffVector::new(vec![1.0])?]
    } else {
        simplex_grid(m, grid_resolution)?
    };
    evaluate_tradeoffs(
        &ckpt.actor_spec,
        &ckpt.actor_params,
        env.as_ref(),
        &grid,
        episodes_per_point,
        rng,
    )
}
