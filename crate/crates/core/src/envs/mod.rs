//! Contextual bandit over labelled contexts and partially observed mazes.

mod digits;
mod idx;
mod labyrinth;

pub use digits::{synthetic_digits, DIGIT_PIXELS};
pub use idx::{load_idx_dataset, parse_idx, IdxArray, MAGIC_IMAGES, MAGIC_LABELS};
pub use labyrinth::{generate_maze, LabyrinthEnv, Maze, Variant, ACTIONS, OBS_DIM};

use crate::error::{bail, Result};
use crate::rng::Rng;
use rand::Rng as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub contexts: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(contexts: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if contexts.is_empty() || contexts.len() != labels.len() {
            bail!(Input, "need one label per context and at least one context");
        }
        if let Some(l) = labels.iter().find(|&&l| l >= classes) {
            bail!(Input, "label {l} out of range for {classes} classes");
        }
        if contexts.iter().any(|c| c.len() != contexts[0].len()) {
            bail!(Input, "contexts differ in length");
        }
        Ok(Dataset { contexts, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.contexts[0].len()
    }
}

/// Reward 1 for the true label, else 0; flipped with probability `p_flip`
/// outside eval mode.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    pub data: Dataset,
    pub p_flip: f64,
    pub eval: bool,
}

impl BanditEnv {
    pub fn new(data: Dataset, p_flip: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_flip) {
            bail!(Configuration, "p_flip must be in [0,1]");
        }
        Ok(BanditEnv { data, p_flip, eval: false })
    }

    pub fn step(&self, context: usize, action: usize, rng: &mut Rng) -> Result<f64> {
        if action >= self.data.classes {
            bail!(Contract, "action {action} out of range");
        }
        let Some(&label) = self.data.labels.get(context) else { bail!(Contract, "context {context} out of range") };
        let r = if action == label { 1.0 } else { 0.0 };
        if !self.eval && self.p_flip > 0.0 && rng.random::<f64>() < self.p_flip {
            return Ok(1.0 - r);
        }
        Ok(r)
    }
}
