use super::NodeId;
use crate::linalg::Mat;
use serde::{Deserialize, Serialize};

/// Declarative graph description, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub layers: Vec<Vec<NodeSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub kind: NodeKind,
    pub out_dim: usize,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default)]
    pub noise: NodeNoise,
    #[serde(default)]
    pub parents: Vec<ParentEdge>,
}

impl NodeSpec {
    pub fn input(dim: usize) -> Self {
        NodeSpec { kind: NodeKind::Input, out_dim: dim, params: Vec::new(), noise: NodeNoise::None, parents: Vec::new() }
    }

    pub fn new(kind: NodeKind, out_dim: usize, params: Vec<f64>, parents: Vec<ParentEdge>) -> Self {
        NodeSpec { kind, out_dim, params, noise: NodeNoise::None, parents }
    }

    pub fn with_noise(mut self, noise: NodeNoise) -> Self {
        self.noise = noise;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParentEdge {
    pub parent: NodeId,
    /// Read only these coordinates of the parent's output.
    #[serde(default)]
    pub coords: Option<Vec<usize>>,
}

impl ParentEdge {
    pub fn full(layer: usize, index: usize) -> Self {
        ParentEdge { parent: NodeId::new(layer, index), coords: None }
    }

    pub fn projected(layer: usize, index: usize, coords: Vec<usize>) -> Self {
        ParentEdge { parent: NodeId::new(layer, index), coords: Some(coords) }
    }
}

/// Closed set of local maps. Parameter layouts (row-major):
/// - `Linear`: `W (out×in)` then `b (out)` when `bias`.
/// - `TanhAffine`: `x = tanh(W z + b)`, same layout with bias.
/// - `SlotRouted`: keys, slot matrices, slot biases (see [`crate::slot`]).
/// - `PiecewiseTabular`: concatenated blocks `θ_1 … θ_R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum NodeKind {
    Input,
    Identity,
    Linear { bias: bool },
    TanhAffine,
    SlotRouted { slots: usize },
    PiecewiseTabular(TabularMap),
}

/// `x = offset_r + A_r θ_r` where `r` is the key nearest to `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularMap {
    pub keys: Vec<Vec<f64>>,
    pub offsets: Vec<Vec<f64>>,
    pub maps: Vec<Mat>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum NodeNoise {
    #[default]
    None,
    AdditiveGaussian { sigma: f64 },
    /// `x = (η/p) ⊙ f(z)`, `η_k ~ Bernoulli(p)` independently.
    BernoulliMask { p: f64 },
    /// Additive noise with a finite support.
    Tabular { support: Vec<Vec<f64>>, probs: Vec<f64> },
}
