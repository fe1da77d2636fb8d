//! Config files: TOML by default, JSON when the extension says so.

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sgprop_core::expert::{NoiseCase, SweepConfig};
use sgprop_core::training::{BanditConfig, LabyrinthConfig};
use std::path::{Path, PathBuf};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(anyhow::Error::from)
    } else {
        toml::from_str(&text).map_err(anyhow::Error::from)
    };
    parsed.with_context(|| format!("invalid config {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepFile {
    /// Feature dimensions swept.
    pub d: Vec<usize>,
    /// Expert input dimensions swept; pairs with `k > d` are skipped.
    pub k: Vec<usize>,
    pub cases: Vec<NoiseCase>,
    /// Number of experts.
    pub m: usize,
    /// Independent instances per grid point.
    pub trials: usize,
    /// Samples per estimator.
    pub n: usize,
    pub seed: u64,
}

impl Default for SweepFile {
    fn default() -> Self {
        SweepFile {
            d: vec![4, 6, 8, 10],
            k: vec![2, 3],
            // Unit-scale noise for each feedback model.
            cases: vec![NoiseCase::Noisy { sigma: 1.0 }, NoiseCase::Activation { p: 0.5 }, NoiseCase::Partial { tau: 1.0 }],
            m: 5,
            trials: 20,
            n: 1,
            seed: 0,
        }
    }
}

impl SweepFile {
    pub fn validate(&self) -> Result<()> {
        if self.d.is_empty() || self.k.is_empty() || self.cases.is_empty() {
            bail!("d, k and cases must be non-empty");
        }
        if self.m == 0 || self.trials == 0 || self.n == 0 {
            bail!("m, trials and n must be >= 1");
        }
        Ok(())
    }

    pub fn to_sweep(&self) -> SweepConfig {
        SweepConfig {
            d: self.d.clone(),
            k: self.k.clone(),
            cases: self.cases.clone(),
            m: self.m,
            trials: self.trials,
            n: self.n,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory holding `train-images-idx3-ubyte` and `train-labels-idx1-ubyte`;
    /// falls back to `$SGPROP_DATA`, then to synthetic digits.
    pub dir: Option<PathBuf>,
    /// Synthetic fallback: examples per digit class.
    pub synthetic_per_class: usize,
    /// Synthetic fallback: pixel noise level.
    pub synthetic_noise: f64,
    /// Seed of the synthetic dataset, independent of the run seeds.
    pub synthetic_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { dir: None, synthetic_per_class: 500, synthetic_noise: 0.3, synthetic_seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditFile {
    /// One run per seed; `bandit.seed` is ignored.
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub bandit: BanditConfig,
}

impl Default for BanditFile {
    fn default() -> Self {
        BanditFile { seeds: vec![0], data: DataConfig::default(), bandit: BanditConfig::default() }
    }
}

impl BanditFile {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must be non-empty");
        }
        if self.data.synthetic_per_class == 0 || self.data.synthetic_noise.is_nan() || self.data.synthetic_noise < 0.0 {
            bail!("data.synthetic_per_class must be >= 1 and data.synthetic_noise >= 0");
        }
        self.bandit.validate().context("in [bandit]")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabyrinthFile {
    /// One run per seed; `labyrinth.seed` is ignored.
    pub seeds: Vec<u64>,
    pub labyrinth: LabyrinthConfig,
}

impl Default for LabyrinthFile {
    fn default() -> Self {
        LabyrinthFile { seeds: vec![0], labyrinth: LabyrinthConfig::default() }
    }
}

impl LabyrinthFile {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must be non-empty");
        }
        self.labyrinth.validate().context("in [labyrinth]")
    }
}
