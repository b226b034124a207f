//! Multi-objective environments with vector rewards and a batched,
//! auto-resetting wrapper.
//!
//! Registered names: `mo-lqr1d`, `mo-pointmass`, `mo-dst-continuous`, plus
//! `mo-lqr1d-scalar`, a single-objective collapse of `mo-lqr1d`.

mod batched;
mod dst;
mod lqr;
mod pointmass;

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub use batched::{BatchedEnv, EnvInstance, StepResult};
pub use dst::{dst_front_oracle, DeepSeaTreasure, SEABED_DEPTHS, SINK_RATE, TREASURE_VALUES};
pub use lqr::{lqr_fixed_gain_return, lqr_gains, lqr_oracle, Lqr1d, LQR_A, LQR_B, LQR_MIN_CONTROL_WEIGHT};
pub use pointmass::{pointmass_constant_action_return, pointmass_front_oracle, PointMass};

pub const ENV_NAMES: [&str; 4] = ["mo-lqr1d", "mo-pointmass", "mo-dst-continuous", "mo-lqr1d-scalar"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Objective count.
    pub objectives: usize,
    /// Truncation horizon.
    pub max_episode_steps: usize,
    pub objective_names: Vec<String>,
}

/// Outcome of advancing one instance by one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub reward: Vec<f64>,
    pub terminated: bool,
}

/// A single multi-objective environment. Instances keep their own state
/// vectors; the environment itself is immutable and shared.
pub trait MoEnv: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    fn spec(&self) -> &EnvSpec;

    /// Draws an initial state.
    fn initial_state(&self, rng: &mut Rng) -> Vec<f64>;

    fn observe(&self, state: &[f64]) -> Vec<f64>;

    /// Advances `state` in place under an action already clipped to [−1, 1].
    fn transition(&self, state: &mut [f64], action: &[f64]) -> Transition;

    /// Fixed hypervolume reference for this environment's returns.
    fn reference_point(&self) -> Vec<f64>;
}

pub fn make_env(name: &str) -> Result<Arc<dyn MoEnv>> {
    match name {
        "mo-lqr1d" => Ok(Arc::new(Lqr1d::new())),
        "mo-lqr1d-scalar" => Ok(Arc::new(Lqr1d::scalarized())),
        "mo-pointmass" => Ok(Arc::new(PointMass::new())),
        "mo-dst-continuous" => Ok(Arc::new(DeepSeaTreasure::new())),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}
