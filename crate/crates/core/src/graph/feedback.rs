use super::{categorical, validate_table, ForwardTrace, LayeredGraph, NodeId};
use crate::error::{bail, Result};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// External feedback rule for every terminal node: the gradient of
/// `½‖x − t‖²`, optionally corrupted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSpec {
    pub terminals: Vec<TerminalFeedback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalFeedback {
    pub target: Target,
    #[serde(default)]
    pub noise: FeedbackNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Constant(Vec<f64>),
    /// Value of the given input node.
    Input(usize),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FeedbackNoise {
    #[default]
    None,
    Gaussian { sigma: f64 },
    Tabular { support: Vec<Vec<f64>>, probs: Vec<f64> },
    /// `g = (η/p)(x − t)` with a single `η ~ Bernoulli(p)`.
    BernoulliScale { p: f64 },
}

impl FeedbackSpec {
    pub fn deterministic(targets: Vec<Vec<f64>>) -> Self {
        FeedbackSpec {
            terminals: targets
                .into_iter()
                .map(|t| TerminalFeedback { target: Target::Constant(t), noise: FeedbackNoise::None })
                .collect(),
        }
    }

    pub fn validate(&self, graph: &LayeredGraph) -> Result<()> {
        let l = graph.terminal_layer();
        if self.terminals.len() != graph.layer_len(l) {
            bail!(Input, "feedback covers {} terminals, graph has {}", self.terminals.len(), graph.layer_len(l));
        }
        for (i, tf) in self.terminals.iter().enumerate() {
            let d = graph.n(NodeId::new(l, i)).out_dim();
            match &tf.target {
                Target::Constant(t) if t.len() != d => bail!(Input, "terminal {i}: target dim {} != {d}", t.len()),
                Target::Input(k) => {
                    if *k >= graph.layer_len(0) || graph.n(NodeId::new(0, *k)).out_dim() != d {
                        bail!(Input, "terminal {i}: target input {k} missing or of wrong dim");
                    }
                }
                _ => {}
            }
            match &tf.noise {
                FeedbackNoise::Gaussian { sigma } if *sigma < 0.0 => bail!(Parameter, "negative feedback sigma"),
                FeedbackNoise::BernoulliScale { p } if !(*p > 0.0 && *p <= 1.0) => {
                    bail!(Parameter, "feedback keep probability must lie in (0, 1]")
                }
                FeedbackNoise::Tabular { support, probs } => validate_table(support, probs, d)?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn sample_noise(&self, i: usize, d: usize, rng: &mut Rng) -> Option<Vec<f64>> {
        match &self.terminals[i].noise {
            FeedbackNoise::None => None,
            FeedbackNoise::Gaussian { sigma } => {
                Some((0..d).map(|_| sigma * crate::rng::normal(rng)).collect::<Vec<f64>>())
            }
            FeedbackNoise::Tabular { support, probs } => Some(support[categorical(probs, rng)].clone()),
            FeedbackNoise::BernoulliScale { p } => Some(vec![if rng.random::<f64>() < *p { 1.0 } else { 0.0 }]),
        }
    }

    pub fn support(&self, i: usize) -> Result<Vec<(Option<Vec<f64>>, f64)>> {
        Ok(match &self.terminals[i].noise {
            FeedbackNoise::None => vec![(None, 1.0)],
            FeedbackNoise::Gaussian { .. } => bail!(Capability, "gaussian feedback noise is not enumerable"),
            FeedbackNoise::Tabular { support, probs } => support
                .iter()
                .zip(probs)
                .filter(|(_, q)| **q > 0.0)
                .map(|(s, q)| (Some(s.clone()), *q))
                .collect(),
            FeedbackNoise::BernoulliScale { p } => {
                let mut v = vec![(Some(vec![1.0]), *p)];
                if *p < 1.0 {
                    v.push((Some(vec![0.0]), 1.0 - p));
                }
                v
            }
        })
    }

    /// Terminal feedback vectors at the given noise realizations.
    pub fn evaluate(&self, trace: &ForwardTrace, noise: &[Option<Vec<f64>>]) -> Vec<Vec<f64>> {
        let l = trace.nodes.len() - 1;
        self.terminals
            .iter()
            .enumerate()
            .map(|(i, tf)| {
                let x = &trace.nodes[l][i].output;
                let t: &[f64] = match &tf.target {
                    Target::Constant(t) => t,
                    Target::Input(k) => &trace.nodes[0][*k].output,
                };
                let g: Vec<f64> = x.iter().zip(t).map(|(a, b)| a - b).collect();
                match (&tf.noise, &noise[i]) {
                    (FeedbackNoise::BernoulliScale { p }, Some(eta)) => g.iter().map(|v| v * eta[0] / p).collect(),
                    (FeedbackNoise::Gaussian { .. } | FeedbackNoise::Tabular { .. }, Some(xi)) => {
                        g.iter().zip(xi).map(|(a, b)| a + b).collect()
                    }
                    _ => g,
                }
            })
            .collect()
    }

    /// Sampled feedback; stream tag `1<<32 + terminal index`.
    pub fn sample(&self, graph: &LayeredGraph, trace: &ForwardTrace, master: u64, sample: u64) -> Vec<Vec<f64>> {
        let l = graph.terminal_layer();
        let noise: Vec<_> = (0..self.terminals.len())
            .map(|i| {
                let mut rng = crate::rng::stream(master, sample, (1u64 << 32) + i as u64);
                self.sample_noise(i, graph.n(NodeId::new(l, i)).out_dim(), &mut rng)
            })
            .collect();
        self.evaluate(trace, &noise)
    }

    pub fn is_stochastic(&self) -> bool {
        self.terminals
            .iter()
            .any(|t| !matches!(t.noise, FeedbackNoise::None) || matches!(t.target, Target::Input(_)))
    }
}
