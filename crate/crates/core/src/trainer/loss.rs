//! Clipped-surrogate actor loss and vector-MSE critic loss, differentiated
//! through the hypernetworks.
//!
//! Rows of a minibatch are grouped by trade-off so the generated parameters
//! and their gradient are computed once per distinct `w`.

use crate::error::{Error, Result};
use crate::hypernet::{hypernet_backward, hypernet_forward, HypernetParams, HypernetSpec};
use crate::nn;

use super::rollout::{actor_spec, critic_spec, RolloutBatch};

#[derive(Clone, Debug, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    /// Gradient with respect to the flat actor hypernetwork parameters.
    pub grad: Vec<f64>,
    /// Largest `|r − 1|` over the minibatch.
    pub max_ratio_deviation: f64,
    /// Fraction of rows whose clipped branch was selected.
    pub clip_fraction: f64,
    pub mean_entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Row indices grouped by cluster, in order of first appearance, each group
/// keeping the minibatch order.
fn group_rows(batch: &RolloutBatch, rows: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &row in rows {
        let c = batch.cluster_of_env[batch.env_of_row(row)];
        match groups.iter_mut().find(|(k, _)| *k == c) {
            Some((_, g)) => g.push(row),
            None => groups.push((c, vec![row])),
        }
    }
    groups
}

fn check_rows(batch: &RolloutBatch, rows: &[usize]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("empty minibatch".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= batch.rows()) {
        return Err(Error::shape("minibatch row index bound", batch.rows(), bad));
    }
    Ok(())
}

/// `−mean[min(r·A, clip(r, 1−ε, 1+ε)·A)] − c_H·mean[H]` with
/// `r = exp(logp_new − logp_old)` under `θ = H_π(w)` of each row.
///
/// `advantages` holds one scalarized advantage per batch row. The ratio
/// gradient flows only through rows where the unclipped branch is selected.
pub fn actor_loss(
    spec: &HypernetSpec,
    hp: &HypernetParams,
    batch: &RolloutBatch,
    advantages: &[f64],
    rows: &[usize],
    clip_eps: f64,
    entropy_coef: f64,
) -> Result<ActorLoss> {
    check_rows(batch, rows)?;
    if advantages.len() != batch.rows() {
        return Err(Error::shape("scalarized advantages", batch.rows(), advantages.len()));
    }
    let policy = actor_spec(spec)?;
    let b = rows.len() as f64;
    let mut grad = vec![0.0; spec.param_count()];
    let mut surrogate = 0.0;
    let mut entropy = 0.0;
    let mut max_dev: f64 = 0.0;
    let mut clipped = 0usize;
    for (_, group) in group_rows(batch, rows) {
        let w = batch.tradeoff_of_row(group[0]);
        let theta = hypernet_forward(spec, hp, w)?;
        let mut g_theta = vec![0.0; theta.len()];
        for row in group {
            let (dist, trace) = nn::policy_forward_trace(policy, &theta, batch.obs_row(row))?;
            let (logp, g_loc, g_log_std) = nn::log_prob_with_grad(&dist, batch.action_row(row));
            let ratio = (logp - batch.logprobs[row]).exp();
            if !ratio.is_finite() {
                return Err(Error::numeric(format!("probability ratio at row {row}")));
            }
            let a = advantages[row];
            let unclipped = ratio * a;
            let clipped_term = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * a;
            max_dev = max_dev.max((ratio - 1.0).abs());
            let h = nn::gaussian_entropy(&dist);
            entropy += h;
            // ∂L/∂logp for this row
            let coef = if unclipped <= clipped_term {
                surrogate += unclipped;
                -a * ratio / b
            } else {
                surrogate += clipped_term;
                clipped += 1;
                0.0
            };
            let gl: Vec<f64> = g_loc.iter().map(|g| coef * g).collect();
            let gs: Vec<f64> = g_log_std.iter().map(|g| coef * g - entropy_coef / b).collect();
            nn::policy_backward(policy, &theta, &dist, &trace, &gl, &gs, &mut g_theta)?;
        }
        hypernet_backward(spec, hp, w, &g_theta, &mut grad)?;
    }
    let loss = -surrogate / b - entropy_coef * entropy / b;
    if !loss.is_finite() {
        return Err(Error::numeric("actor loss"));
    }
    Ok(ActorLoss {
        loss,
        grad,
        max_ratio_deviation: max_dev,
        clip_fraction: clipped as f64 / b,
        mean_entropy: entropy / b,
    })
}

/// `mean‖V_φ(s) − V̂‖²` with `φ = H_V(w)` of each row; `targets` holds
/// `m` value targets per batch row.
pub fn critic_loss(
    spec: &HypernetSpec,
    hp: &HypernetParams,
    batch: &RolloutBatch,
    targets: &[f64],
    rows: &[usize],
) -> Result<CriticLoss> {
    check_rows(batch, rows)?;
    let m = batch.objectives;
    if targets.len() != batch.rows() * m {
        return Err(Error::shape("value targets", batch.rows() * m, targets.len()));
    }
    let net = critic_spec(spec)?;
    let b = rows.len() as f64;
    let mut grad = vec![0.0; spec.param_count()];
    let mut total = 0.0;
    for (_, group) in group_rows(batch, rows) {
        let w = batch.tradeoff_of_row(group[0]);
        let phi = hypernet_forward(spec, hp, w)?;
        let mut g_phi = vec![0.0; phi.len()];
        for row in group {
            let trace = nn::mlp_forward_trace(net, &phi, batch.obs_row(row))?;
            let target = &targets[row * m..(row + 1) * m];
            let g_out: Vec<f64> = trace
                .output()
                .iter()
                .zip(target)
                .map(|(v, t)| {
                    total += (v - t).powi(2);
                    2.0 * (v - t) / b
                })
                .collect();
            nn::mlp_backward(net, &phi, &trace, &g_out, &mut g_phi)?;
        }
        hypernet_backward(spec, hp, w, &g_phi, &mut grad)?;
    }
    let loss = total / b;
    if !loss.is_finite() {
        return Err(Error::numeric("critic loss"));
    }
    Ok(CriticLoss { loss, grad })
}
