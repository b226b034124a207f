//! Continuous deep-sea treasure.
//!
//! A submarine moves along a line of ten seabed columns, `p ∈ [0, 10)`,
//! by `u ∈ [−1, 1]` per step while sinking at a fixed rate. The episode ends
//! when its depth reaches the seabed of the column it is over, paying that
//! column's treasure. Every step costs one unit of time. Deeper treasures
//! are worth more but take longer, and the achievable front is not convex.

use super::{EnvSpec, MoEnv, Transition};
use crate::pareto::{nondominated_filter, ParetoFront};
use crate::rng::Rng;

pub const SEABED_DEPTHS: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 4.0, 4.0, 7.0, 7.0, 9.0, 10.0];
pub const TREASURE_VALUES: [f64; 10] = [0.7, 8.2, 11.5, 14.0, 15.1, 16.1, 19.6, 20.3, 22.4, 23.7];
/// Depth gained per step.
pub const SINK_RATE: f64 = 0.5;
const START_POSITION: f64 = 0.5;
const MAX_POSITION: f64 = 10.0 - 1e-9;
const DST_HORIZON: usize = 50;

#[derive(Debug, Clone)]
pub struct DeepSeaTreasure {
    spec: EnvSpec,
}

impl DeepSeaTreasure {
    pub fn new() -> Self {
        DeepSeaTreasure {
            spec: EnvSpec {
                obs_dim: 2,
                act_dim: 1,
                objectives: 2,
                max_episode_steps: DST_HORIZON,
                objective_names: vec!["treasure".into(), "time".into()],
            },
        }
    }
}

impl Default for DeepSeaTreasure {
    fn default() -> Self {
        DeepSeaTreasure::new()
    }
}

fn column(p: f64) -> usize {
    (p.floor() as usize).min(SEABED_DEPTHS.len() - 1)
}

impl MoEnv for DeepSeaTreasure {
    fn name(&self) -> &'static str {
        "mo-dst-continuous"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// `[position, depth]`; the start is fixed.
    fn initial_state(&self, _rng: &mut Rng) -> Vec<f64> {
        vec![START_POSITION, 0.0]
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        state.to_vec()
    }

    fn transition(&self, state: &mut [f64], action: &[f64]) -> Transition {
        state[0] = (state[0] + action[0]).clamp(0.0, MAX_POSITION);
        state[1] += SINK_RATE;
        let col = column(state[0]);
        let terminated = state[1] >= SEABED_DEPTHS[col];
        let treasure = if terminated { TREASURE_VALUES[col] } else { 0.0 };
        Transition {
            reward: vec![treasure, -1.0],
            terminated,
        }
    }

    fn reference_point(&self) -> Vec<f64> {
        vec![0.0, -(DST_HORIZON as f64)]
    }
}

/// Undiscounted return of "move at `speed` until `p ≥ stop`, then hold".
fn dash_and_hold_return(speed: f64, stop: f64) -> Vec<f64> {
    let env = DeepSeaTreasure::new();
    let mut state = vec![START_POSITION, 0.0];
    let mut ret = vec![0.0, 0.0];
    for _ in 0..DST_HORIZON {
        let u = if state[0] < stop { speed.min(stop - state[0]) } else { 0.0 };
        let tr = env.transition(&mut state, &[u]);
        ret[0] += tr.reward[0];
        ret[1] += tr.reward[1];
        if tr.terminated {
            break;
        }
    }
    ret
}

/// Brute-force front over dash-and-hold policies: every speed in
/// `{k/grid}` and every stop position on a `1/grid` lattice.
pub fn dst_front_oracle(grid: usize) -> ParetoFront {
    let grid = grid.max(1);
    let mut points = Vec::new();
    for s in 0..=grid {
        let speed = s as f64 / grid as f64;
        for k in 0..=(10 * grid) {
            let stop = START_POSITION + k as f64 / grid as f64;
            points.push(dash_and_hold_return(speed, stop));
        }
    }
    ParetoFront::new(
        nondominated_filter(&points),
        DeepSeaTreasure::new().reference_point(),
    )
}
