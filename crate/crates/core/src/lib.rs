//! Hypernetwork-based multi-objective PPO.
//!
//! One actor hypernetwork and one critic hypernetwork map a trade-off vector
//! on the simplex to the parameters of a policy and of a vector-valued
//! critic. Training samples clusters of trade-offs, rolls out the generated
//! policies in parallel environments, and updates both hypernetworks with a
//! scalarized clipped-PPO objective. Learned fronts are scored with the
//! Pareto tools in [`pareto`].

pub mod cli;
pub mod envs;
pub mod error;
pub mod hypernet;
pub mod nn;
pub mod pareto;
pub mod rng;
pub mod simplex;
pub mod trainer;

pub use error::{Error, Result};
pub use rng::Rng;
pub use simplex::TradeoffVector;

/// Per-objective returns or rewards.
pub type ObjectiveVector = Vec<f64>;
