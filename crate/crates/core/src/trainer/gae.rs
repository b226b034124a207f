//! Per-objective generalized advantage estimation and scalarization.

use super::config::AdvantageNorm;
use super::rollout::RolloutBatch;
use crate::simplex::TradeoffVector;

/// Guard added to the standard deviation during normalization.
pub const ADV_STD_EPS: f64 = 1e-8;

/// Vector advantages and value targets, `N × T × m`, laid out like the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Advantages {
    pub objectives: usize,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

/// GAE over one trajectory, independently for each of `m` interleaved
/// channels. A terminated step does not bootstrap; a truncated step
/// bootstraps from `next_values` but stops the backward accumulation.
#[allow(clippy::too_many_arguments)]
pub fn gae_trajectory(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    objectives: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let m = objectives;
    let steps = terminated.len();
    debug_assert_eq!(rewards.len(), steps * m);
    let mut adv = vec![0.0; steps * m];
    let mut targets = vec![0.0; steps * m];
    let mut carry = vec![0.0; m];
    for t in (0..steps).rev() {
        let not_terminal = if terminated[t] { 0.0 } else { 1.0 };
        let keep = if terminated[t] || truncated[t] { 0.0 } else { 1.0 };
        for j in 0..m {
            let k = t * m + j;
            let delta = rewards[k] + gamma * next_values[k] * not_terminal - values[k];
            carry[j] = delta + gamma * lambda * keep * carry[j];
            adv[k] = carry[j];
            targets[k] = carry[j] + values[k];
        }
    }
    (adv, targets)
}

pub fn gae_per_objective(batch: &RolloutBatch, gamma: f64, lambda: f64) -> Advantages {
    let m = batch.objectives;
    let t_len = batch.steps;
    let mut advantages = Vec::with_capacity(batch.rows() * m);
    let mut targets = Vec::with_capacity(batch.rows() * m);
    for i in 0..batch.num_envs {
        let span = i * t_len * m..(i + 1) * t_len * m;
        let flags = i * t_len..(i + 1) * t_len;
        let (a, v) = gae_trajectory(
            &batch.rewards[span.clone()],
            &batch.values[span.clone()],
            &batch.next_values[span],
            &batch.terminated[flags.clone()],
            &batch.truncated[flags],
            m,
            gamma,
            lambda,
        );
        advantages.extend(a);
        targets.extend(v);
    }
    Advantages {
        objectives: m,
        advantages,
        targets,
    }
}

/// Standardizes the advantage channels over all rows, then dots each row
/// with its trade-off. `tradeoff_of_row(r)` gives the weights of row `r`.
pub fn normalize_and_scalarize<'a>(
    advantages: &[f64],
    objectives: usize,
    mode: AdvantageNorm,
    tradeoff_of_row: impl Fn(usize) -> &'a TradeoffVector,
) -> Vec<f64> {
    let m = objectives;
    let rows = advantages.len() / m;
    if rows == 0 {
        return Vec::new();
    }
    let mut mean = vec![0.0; m];
    for row in advantages.chunks_exact(m) {
        for j in 0..m {
            mean[j] += row[j];
        }
    }
    mean.iter_mut().for_each(|x| *x /= rows as f64);
    let mut var = vec![0.0; m];
    for row in advantages.chunks_exact(m) {
        for j in 0..m {
            var[j] += (row[j] - mean[j]).powi(2);
        }
    }
    var.iter_mut().for_each(|x| *x /= rows as f64);
    let scale: Vec<f64> = match mode {
        AdvantageNorm::PerObjective => var.iter().map(|v| v.sqrt() + ADV_STD_EPS).collect(),
        AdvantageNorm::Shared => {
            let pooled = (var.iter().sum::<f64>() / m as f64).sqrt() + ADV_STD_EPS;
            vec![pooled; m]
        }
    };
    advantages
        .chunks_exact(m)
        .enumerate()
        .map(|(r, row)| {
            let w = tradeoff_of_row(r).weights();
            (0..m).map(|j| w[j] * (row[j] - mean[j]) / scale[j]).sum()
        })
        .collect()
}
