//! Planar double integrator rewarded for forward speed and penalized for
//! control energy.

use super::{EnvSpec, MoEnv, Transition};
use crate::pareto::{nondominated_filter, ParetoFront};
use crate::rng::Rng;

pub const POINTMASS_DT: f64 = 0.05;
pub const POINTMASS_HORIZON: usize = 200;
const INITIAL_POSITION_SPREAD: f64 = 0.1;
/// Largest reachable |position| and |velocity| within one episode under |u| ≤ 1.
const POSITION_SCALE: f64 = POINTMASS_DT * POINTMASS_DT * (POINTMASS_HORIZON * (POINTMASS_HORIZON + 1) / 2) as f64;
const VELOCITY_SCALE: f64 = POINTMASS_DT * POINTMASS_HORIZON as f64;

#[derive(Debug, Clone)]
pub struct PointMass {
    spec: EnvSpec,
}

impl PointMass {
    pub fn new() -> Self {
        PointMass {
            spec: EnvSpec {
                obs_dim: 4,
                act_dim: 2,
                objectives: 2,
                max_episode_steps: POINTMASS_HORIZON,
                objective_names: vec!["forward_speed".into(), "energy".into()],
            },
        }
    }
}

impl Default for PointMass {
    fn default() -> Self {
        PointMass::new()
    }
}

impl MoEnv for PointMass {
    fn name(&self) -> &'static str {
        "mo-pointmass"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// `[px, py, vx, vy]`, at rest near the origin.
    fn initial_state(&self, rng: &mut Rng) -> Vec<f64> {
        let s = INITIAL_POSITION_SPREAD;
        vec![rng.uniform_range(-s, s), rng.uniform_range(-s, s), 0.0, 0.0]
    }

    /// Position and velocity in units of their reachable maxima, so the
    /// observation stays in [−1, 1] for the whole episode.
    fn observe(&self, state: &[f64]) -> Vec<f64> {
        vec![
            state[0] / POSITION_SCALE,
            state[1] / POSITION_SCALE,
            state[2] / VELOCITY_SCALE,
            state[3] / VELOCITY_SCALE,
        ]
    }

    fn transition(&self, state: &mut [f64], action: &[f64]) -> Transition {
        state[2] += POINTMASS_DT * action[0];
        state[3] += POINTMASS_DT * action[1];
        state[0] += POINTMASS_DT * state[2];
        state[1] += POINTMASS_DT * state[3];
        Transition {
            reward: vec![state[2], -(action[0] * action[0] + action[1] * action[1])],
            terminated: false,
        }
    }

    fn reference_point(&self) -> Vec<f64> {
        // speed return is bounded by ±1005, energy by −400
        vec![-1010.0, -401.0]
    }
}

/// Undiscounted return of holding `action` for a full episode.
pub fn pointmass_constant_action_return(action: [f64; 2]) -> Vec<f64> {
    let env = PointMass::new();
    let mut state = vec![0.0; 4];
    let mut ret = vec![0.0, 0.0];
    for _ in 0..POINTMASS_HORIZON {
        let tr = env.transition(&mut state, &action);
        ret[0] += tr.reward[0];
        ret[1] += tr.reward[1];
    }
    ret
}

/// Non-dominated returns of all constant actions `u ∈ {k/grid}²`,
/// `k = −grid..=grid`.
pub fn pointmass_front_oracle(grid: usize) -> ParetoFront {
    let grid = grid.max(1) as i64;
    let mut points = Vec::new();
    for i in -grid..=grid {
        for j in -grid..=grid {
            let u = [i as f64 / grid as f64, j as f64 / grid as f64];
            points.push(pointmass_constant_action_return(u));
        }
    }
    ParetoFront::new(nondominated_filter(&points), PointMass::new().reference_point())
}
