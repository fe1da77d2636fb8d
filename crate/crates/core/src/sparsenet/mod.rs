//! Sparsely connected slot-routed networks with co-located synthetic-gradient
//! predictors, in feedforward (residual) and recurrent form.

mod feedforward;
mod neuron;
mod recurrent;

pub use feedforward::{FeedforwardNet, FfTrace};
pub use neuron::{train_predictor_step, SparseNeuron};
pub use recurrent::{BpttTrace, RecurrentNet, StepCache};

use crate::error::{bail, Result};
use crate::linalg::dot;
use crate::rng::Rng;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_VERSION: u32 = 1;
/// Backward-in-time λ growth rate.
pub const DEFAULT_RHO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseNetConfig {
    pub width: usize,
    /// Neuron state dimension `q`.
    pub neuron_dim: usize,
    pub slots: usize,
    pub parents: usize,
    /// Stacked layers (feedforward only).
    pub layers: usize,
    /// Neurons reading the observation embedding (recurrent only).
    pub input_neurons: usize,
    /// Observation embedding size (recurrent only).
    pub embed_dim: usize,
    /// Raw input size: pixels (feedforward) or observation length (recurrent).
    pub input_dim: usize,
    pub actions: usize,
    pub seed: u64,
}

impl SparseNetConfig {
    pub fn validate(&self, recurrent: bool) -> Result<()> {
        if self.width == 0 || self.neuron_dim == 0 || self.slots == 0 || self.actions == 0 || self.input_dim == 0 {
            bail!(Configuration, "width, neuron_dim, slots, actions and input_dim must be positive");
        }
        if self.parents >= self.width {
            bail!(Configuration, "parents ({}) must be < width ({})", self.parents, self.width);
        }
        if recurrent {
            if self.input_neurons == 0 || self.input_neurons > self.width {
                bail!(Configuration, "input_neurons must be in 1..=width");
            }
            if self.embed_dim == 0 {
                bail!(Configuration, "embed_dim must be positive");
            }
        } else {
            if self.layers == 0 {
                bail!(Configuration, "layers must be positive");
            }
            if self.parents == 0 {
                bail!(Configuration, "feedforward networks need at least one parent");
            }
        }
        Ok(())
    }
}

/// `n_parents` distinct neurons from `0..width`, excluding `me`, sorted.
pub(crate) fn sample_parents(width: usize, n: usize, me: usize, rng: &mut Rng) -> Vec<usize> {
    let mut p: Vec<usize> = sample(rng, width - 1, n).into_iter().map(|j| if j >= me { j + 1 } else { j }).collect();
    p.sort_unstable();
    p
}

/// Action keys over the flattened state: `z_a = ⟨h, k_a⟩ / √(Wq)`.
pub(crate) fn head_logits(head: &[f64], flat: &[f64], actions: usize) -> Vec<f64> {
    let n = flat.len();
    let s = 1.0 / (n as f64).sqrt();
    (0..actions).map(|a| dot(&head[a * n..(a + 1) * n], flat) * s).collect()
}

/// Accumulates the key gradient into `g_head` and returns `∂/∂h`.
pub(crate) fn head_vjp(head: &[f64], flat: &[f64], f: &[f64], g_head: &mut [f64]) -> Vec<f64> {
    let n = flat.len();
    let s = 1.0 / (n as f64).sqrt();
    let mut gh = vec![0.0; n];
    for (a, &fa) in f.iter().enumerate() {
        if fa == 0.0 {
            continue;
        }
        crate::linalg::axpy(fa * s, &head[a * n..(a + 1) * n], &mut gh);
        crate::linalg::axpy(fa * s, flat, &mut g_head[a * n..(a + 1) * n]);
    }
    gh
}

/// Parameter gradients in network order: neurons, action keys, embedding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetGrads {
    pub neurons: Vec<Vec<f64>>,
    pub head: Vec<f64>,
    pub embed: Vec<f64>,
}

impl NetGrads {
    pub fn add(&mut self, other: &NetGrads) {
        for (a, b) in self.neurons.iter_mut().zip(&other.neurons) {
            crate::linalg::add_into(b, a);
        }
        crate::linalg::add_into(&other.head, &mut self.head);
        crate::linalg::add_into(&other.embed, &mut self.embed);
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.neurons.iter_mut().flatten().chain(&mut self.head).chain(&mut self.embed) {
            *v *= c;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.neurons.iter().flatten().chain(&self.head).chain(&self.embed).copied().collect()
    }
}

/// Output of a mixed backward pass over one sample or episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixedGrads {
    pub grads: NetGrads,
    /// Per-neuron backpropagated component `p̃` (present in mixed mode).
    pub p: Vec<Vec<f64>>,
    /// Per-neuron synthetic component `s̃`.
    pub s: Vec<Vec<f64>>,
    /// Predictor squared-error gradients and the number of records behind them.
    pub pred: Vec<Vec<f64>>,
    pub pred_records: usize,
    /// Realized mixing weights `θ[t][i]` (recurrent, when recorded).
    pub schedule: Option<Vec<Vec<f64>>>,
}

impl MixedGrads {
    pub fn is_mixed(&self) -> bool {
        !self.p.is_empty()
    }
}

/// One backward-in-time step of the λ schedule:
/// `θ_t,i = min{1, θ_{t+1,i} + ρ·mean_{j∈ch(i)}(1 − θ_{t+1,j})}`.
pub fn lambda_schedule_bptt(next: &[f64], children: &[Vec<usize>], rho: f64) -> Vec<f64> {
    next.iter()
        .zip(children)
        .map(|(&th, ch)| {
            let delta =
                if ch.is_empty() { 0.0 } else { ch.iter().map(|&j| 1.0 - next[j]).sum::<f64>() / ch.len() as f64 };
            (th + rho * delta).min(1.0)
        })
        .collect()
}

/// Versioned checkpoint of either network type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Network {
    Feedforward(FeedforwardNet),
    Recurrent(RecurrentNet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    network: Network,
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&Checkpoint { version: CHECKPOINT_VERSION, network: self.clone() })
            .map_err(|e| crate::Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| crate::Error::Format(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            bail!(Format, "unsupported checkpoint version {}", c.version);
        }
        Ok(c.network)
    }
}
