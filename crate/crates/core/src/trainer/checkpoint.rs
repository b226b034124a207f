use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::{NetworkConfig, TrainerConfig};
use crate::error::{Error, Result};
use crate::hypernet::{HypernetParams, HypernetSpec};
use crate::rng::RngState;

pub const CHECKPOINT_VERSION: &str = "morl-checkpoint/1";

/// Complete trainer state. Stored as JSON with round-trip float formatting,
/// so parameters survive save and load bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub env_name: String,
    pub actor_spec: HypernetSpec,
    pub critic_spec: HypernetSpec,
    pub actor_params: HypernetParams,
    pub critic_params: HypernetParams,
    pub trainer: TrainerConfig,
    pub network: NetworkConfig,
    /// Completed training iterations.
    pub iteration: usize,
    pub rng: RngState,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.check()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {:?}, expected {CHECKPOINT_VERSION:?}",
                self.version
            )));
        }
        let pairs = [
            ("actor", &self.actor_spec, &self.actor_params, &self.actor_adam),
            ("critic", &self.critic_spec, &self.critic_params, &self.critic_adam),
        ];
        for (name, spec, params, adam) in pairs {
            let n = spec.param_count();
            if params.as_flat().len() != n {
                return Err(Error::Checkpoint(format!(
                    "{name} parameters have length {}, spec needs {n}",
                    params.as_flat().len()
                )));
            }
            if adam.first_moment().len() != n || adam.second_moment().len() != n {
                return Err(Error::Checkpoint(format!("{name} optimizer state has the wrong length")));
            }
        }
        Ok(())
    }
}
