//! Policy-gradient training: returns, REINFORCE feedback, Adam and the
//! bandit/labyrinth drivers.

mod adam;
mod bandit;
mod labyrinth;
mod mlp;
mod policy;
mod record;

pub use adam::Adam;
pub use bandit::{run_bandit_experiment, BanditConfig};
pub use labyrinth::{rollout, run_labyrinth_experiment, Episode, LabyrinthConfig};
pub use mlp::{DenseMlp, MlpTrace};
pub use policy::{discounted_returns, reinforce_feedback, reinforce_feedback_step, sample_action};
pub use record::{config_hash, RunResult, RunRow};

use crate::error::{bail, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SparsenetSgprop,
    SparsenetBackprop,
    DenseMlp,
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparsenet-sgprop" => Ok(Method::SparsenetSgprop),
            "sparsenet-backprop" => Ok(Method::SparsenetBackprop),
            "dense-mlp" => Ok(Method::DenseMlp),
            other => bail!(Configuration, "unknown method '{other}'"),
        }
    }
}

/// Per-neuron mixing-weight policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaConfig {
    pub init: f64,
    /// Update from the batch closed form; otherwise `init` stays pinned.
    pub adaptive: bool,
    pub momentum: f64,
    /// Unit-normalize each `(p̃, s̃)` draw before estimating.
    pub normalize: bool,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig { init: 1.0, adaptive: true, momentum: 0.9, normalize: false }
    }
}

impl LambdaConfig {
    pub fn pinned(lambda: f64) -> Self {
        LambdaConfig { init: lambda, adaptive: false, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.init) || !(0.0..=1.0).contains(&self.momentum) {
            bail!(Configuration, "lambda.init and lambda.momentum must be in [0,1]");
        }
        Ok(())
    }
}
