//! Scalar linear system `x' = A·x + B·u` with objectives `(−x², −u²)`.

use super::{EnvSpec, MoEnv, Transition};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::simplex::TradeoffVector;

pub const LQR_A: f64 = 0.9;
pub const LQR_B: f64 = 0.5;
pub const LQR_HORIZON: usize = 200;
/// Smallest control weight accepted by the oracle. Below roughly 0.25 the
/// unconstrained gain exceeds 1 and the first actions from large |x₀| clip.
pub const LQR_MIN_CONTROL_WEIGHT: f64 = 0.1;
/// E[x₀²] for x₀ ~ U[−1, 1].
const INITIAL_SECOND_MOMENT: f64 = 1.0 / 3.0;

#[derive(Debug, Clone)]
pub struct Lqr1d {
    spec: EnvSpec,
    /// When set, the two objectives are collapsed into one with these weights.
    collapse: Option<[f64; 2]>,
}

impl Lqr1d {
    pub fn new() -> Self {
        Lqr1d {
            spec: EnvSpec {
                obs_dim: 1,
                act_dim: 1,
                objectives: 2,
                max_episode_steps: LQR_HORIZON,
                objective_names: vec!["state_cost".into(), "control_cost".into()],
            },
            collapse: None,
        }
    }

    /// Single objective `−(x² + u²)/2`.
    pub fn scalarized() -> Self {
        Lqr1d {
            spec: EnvSpec {
                objectives: 1,
                objective_names: vec!["scalarized_cost".into()],
                ..Lqr1d::new().spec
            },
            collapse: Some([0.5, 0.5]),
        }
    }
}

impl Default for Lqr1d {
    fn default() -> Self {
        Lqr1d::new()
    }
}

impl MoEnv for Lqr1d {
    fn name(&self) -> &'static str {
        if self.collapse.is_some() {
            "mo-lqr1d-scalar"
        } else {
            "mo-lqr1d"
        }
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self, rng: &mut Rng) -> Vec<f64> {
        vec![rng.uniform_range(-1.0, 1.0)]
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        state.to_vec()
    }

    fn transition(&self, state: &mut [f64], action: &[f64]) -> Transition {
        let x = state[0];
        let u = action[0];
        state[0] = LQR_A * x + LQR_B * u;
        let costs = [-x * x, -u * u];
        let reward = match self.collapse {
            Some(w) => vec![w[0] * costs[0] + w[1] * costs[1]],
            None => costs.to_vec(),
        };
        Transition {
            reward,
            terminated: false,
        }
    }

    fn reference_point(&self) -> Vec<f64> {
        match self.collapse {
            Some(w) => vec![-50.0 * w[0] - 20.0 * w[1]],
            None => vec![-50.0, -20.0],
        }
    }
}

/// Optimal expected discounted scalarized return over `horizon` steps by the
/// backward Riccati recursion on the cost `w₁x² + w₂u²`.
pub fn lqr_oracle(w: &TradeoffVector, horizon: usize, gamma: f64) -> Result<f64> {
    let (q, r) = oracle_weights(w)?;
    Ok(-INITIAL_SECOND_MOMENT * riccati(q, r, horizon, gamma).0)
}

/// Time-varying optimal gains `u_t = −k_t·x_t`, `t = 0..horizon`.
pub fn lqr_gains(w: &TradeoffVector, horizon: usize, gamma: f64) -> Result<Vec<f64>> {
    let (q, r) = oracle_weights(w)?;
    Ok(riccati(q, r, horizon, gamma).1)
}

fn oracle_weights(w: &TradeoffVector) -> Result<(f64, f64)> {
    if w.dim() != 2 {
        return Err(Error::OracleDomain(format!(
            "the LQR oracle needs a 2-objective trade-off, got {}",
            w.dim()
        )));
    }
    let (q, r) = (w.weights()[0], w.weights()[1]);
    if r < LQR_MIN_CONTROL_WEIGHT {
        return Err(Error::OracleDomain(format!(
            "control weight {r} is below {LQR_MIN_CONTROL_WEIGHT}"
        )));
    }
    Ok((q, r))
}

fn riccati(q: f64, r: f64, horizon: usize, gamma: f64) -> (f64, Vec<f64>) {
    let (a, b) = (LQR_A, LQR_B);
    let mut p = 0.0;
    let mut gains = vec![0.0; horizon];
    for t in (0..horizon).rev() {
        let k = gamma * p * a * b / (r + gamma * p * b * b);
        gains[t] = k;
        p = q + r * k * k + gamma * p * (a - b * k).powi(2);
    }
    (p, gains)
}

/// Expected discounted scalarized return of the stationary feedback
/// `u = −k·x`, evaluated in closed form.
pub fn lqr_fixed_gain_return(w: &TradeoffVector, gain: f64, horizon: usize, gamma: f64) -> f64 {
    let (q, r) = (w.weights()[0], w.weights()[1]);
    let rho = gamma * (LQR_A - LQR_B * gain).powi(2);
    let series = if (1.0 - rho).abs() < 1e-15 {
        horizon as f64
    } else {
        (1.0 - rho.powi(horizon as i32)) / (1.0 - rho)
    };
    -INITIAL_SECOND_MOMENT * (q + r * gain * gain) * series
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv(a: f64, b: f64) -> TradeoffVector {
        TradeoffVector::new(vec![a, b]).unwrap()
    }

    #[test]
    fn hand_step() {
        let env = Lqr1d::new();
        let mut s = vec![0.5];
        let tr = env.transition(&mut s, &[0.2]);
        assert!((s[0] - 0.55).abs() < 1e-15);
        assert_eq!(tr.reward, vec![-0.25, -0.04000000000000001]);
        assert!(!tr.terminated);
    }

    #[test]
    fn zero_state_weight_is_free() {
        assert_eq!(lqr_oracle(&tv(0.0, 1.0), 200, 0.99).unwrap(), 0.0);
    }

    #[test]
    fn domain_error_below_min_control_weight() {
        assert!(matches!(
            lqr_oracle(&tv(0.95, 0.05), 200, 0.99),
            Err(Error::OracleDomain(_))
        ));
    }

    #[test]
    fn oracle_beats_every_fixed_gain() {
        for (a, b) in [(0.5, 0.5), (0.9, 0.1), (0.2, 0.8)] {
            let w = tv(a, b);
            let best = lqr_oracle(&w, 200, 0.99).unwrap();
            for i in 0..=300 {
                let k = i as f64 * 0.01;
                assert!(lqr_fixed_gain_return(&w, k, 200, 0.99) <= best + 1e-12);
            }
        }
    }

    #[test]
    fn optimal_gain_bounds() {
        // |u| = k|x| ≤ 1 on the whole start interval once w2 ≥ 0.25
        for i in 0..=75 {
            let r = 0.25 + i as f64 * 0.01;
            let gains = lqr_gains(&tv(1.0 - r, r), 200, 0.99).unwrap();
            assert!(gains.iter().all(|k| k.abs() <= 1.0), "r={r}");
        }
        // below that only large initial states saturate
        let gains = lqr_gains(&tv(0.9, 0.1), 200, 0.99).unwrap();
        assert!(gains.iter().all(|k| k.abs() < 1.35));
    }

    #[test]
    fn scalarized_reward() {
        let env = Lqr1d::scalarized();
        let mut s = vec![0.5];
        let tr = env.transition(&mut s, &[0.2]);
        assert!((tr.reward[0] - 0.5 * (-0.25 - 0.04)).abs() < 1e-15);
    }
}
