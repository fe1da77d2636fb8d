//! Backpropagation and synthetic-gradient propagation over a recorded trace.

mod tabular;

pub use tabular::{InputDistribution, Mode, Scenario, TabularProblem};
pub(crate) use tabular::conditional_means as tabular_conditional;

use crate::error::{bail, Result};
use crate::graph::{ForwardTrace, LayeredGraph, NodeId, ObsKey};
use crate::linalg::{mix, Mat};
use std::collections::HashMap;

/// Predicts a node's incoming feedback from its local observation.
#[derive(Debug, Clone)]
pub enum Predictor {
    Zero,
    /// Exact conditional means keyed by observation.
    Table(HashMap<ObsKey, Vec<f64>>),
    /// `W z + b` on the node's input.
    Affine { w: Mat, b: Vec<f64> },
}

impl Predictor {
    pub fn predict(&self, trace: &ForwardTrace, id: NodeId, dim: usize) -> Result<Vec<f64>> {
        let nt = trace.node(id);
        match self {
            Predictor::Zero => Ok(vec![0.0; dim]),
            Predictor::Table(t) => match t.get(&nt.obs_key()) {
                Some(v) => Ok(v.clone()),
                None => bail!(Lookup, "no table entry for the observation at {id}"),
            },
            Predictor::Affine { w, b } => {
                let mut y = w.matvec(&nt.input);
                for (a, c) in y.iter_mut().zip(b) {
                    *a += c;
                }
                Ok(y)
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PredictorBank {
    pub predictors: HashMap<NodeId, Predictor>,
}

impl PredictorBank {
    pub fn zeros(graph: &LayeredGraph) -> Self {
        PredictorBank {
            predictors: graph.node_ids().filter(|id| id.layer > 0).map(|id| (id, Predictor::Zero)).collect(),
        }
    }

    pub fn get(&self, id: NodeId) -> Option<&Predictor> {
        self.predictors.get(&id)
    }

    pub fn insert(&mut self, id: NodeId, p: Predictor) {
        self.predictors.insert(id, p);
    }
}

/// Per-node mixing weight `λ_v ∈ [0,1]`, shared by all of `v`'s child edges.
#[derive(Debug, Clone, PartialEq)]
pub struct MixWeights {
    lambdas: Vec<Vec<f64>>,
}

impl MixWeights {
    pub fn uniform(graph: &LayeredGraph, lambda: f64) -> Result<Self> {
        Self::from_layers((0..graph.num_layers()).map(|l| vec![lambda; graph.layer_len(l)]).collect())
    }

    pub fn from_layers(lambdas: Vec<Vec<f64>>) -> Result<Self> {
        if lambdas.iter().flatten().any(|l| !(0.0..=1.0).contains(l)) {
            bail!(Parameter, "mixing weights must lie in [0, 1]");
        }
        Ok(MixWeights { lambdas })
    }

    pub fn get(&self, id: NodeId) -> f64 {
        self.lambdas[id.layer][id.index]
    }

    pub fn set(&mut self, id: NodeId, lambda: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&lambda) {
            bail!(Parameter, "mixing weight {lambda} outside [0, 1]");
        }
        self.lambdas[id.layer][id.index] = lambda;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    /// `g_v` or `g̃_v` in each node's output space.
    pub feedback: Vec<Vec<Vec<f64>>>,
    pub param_grad: Vec<Vec<Vec<f64>>>,
    /// Backpropagated component `p̃_v` of the parameter gradient.
    pub p_split: Vec<Vec<Vec<f64>>>,
    /// Synthetic component `s̃_v`; `None` when a child has no predictor (λ_v = 1 only).
    pub s_split: Vec<Vec<Option<Vec<f64>>>>,
}

impl PropagationResult {
    pub fn feedback(&self, id: NodeId) -> &[f64] {
        &self.feedback[id.layer][id.index]
    }

    pub fn param_grad(&self, id: NodeId) -> &[f64] {
        &self.param_grad[id.layer][id.index]
    }
}

fn check_terminal(graph: &LayeredGraph, tf: &[Vec<f64>]) -> Result<()> {
    let l = graph.terminal_layer();
    if tf.len() != graph.layer_len(l) {
        bail!(Input, "terminal feedback covers {} of {} terminals", tf.len(), graph.layer_len(l));
    }
    for (i, g) in tf.iter().enumerate() {
        let d = graph.n(NodeId::new(l, i)).out_dim();
        if g.len() != d {
            bail!(Input, "terminal {i} feedback has dim {} but node has {d}", g.len());
        }
    }
    Ok(())
}

/// Plain backpropagation: `g_v = Σ_{v+} J_v^{v+} g_{v+}`, `g_v^θ = J_v^θ g_v`.
pub fn backprop(graph: &LayeredGraph, trace: &ForwardTrace, terminal: &[Vec<f64>]) -> Result<PropagationResult> {
    check_terminal(graph, terminal)?;
    let nl = graph.num_layers();
    let mut feedback: Vec<Vec<Vec<f64>>> = (0..nl)
        .map(|l| (0..graph.layer_len(l)).map(|i| vec![0.0; graph.n(NodeId::new(l, i)).out_dim()]).collect())
        .collect();
    feedback[nl - 1] = terminal.to_vec();
    for l in (1..nl).rev() {
        for i in 0..graph.layer_len(l) {
            let id = NodeId::new(l, i);
            let gz = graph.input_vjp(id, trace, &feedback[l][i]);
            let node = graph.n(id);
            for (pos, e) in node.spec.parents.iter().enumerate() {
                graph.scatter_to_parent(id, pos, &gz, &mut feedback[e.parent.layer][e.parent.index]);
            }
        }
    }
    let param_grad: Vec<Vec<Vec<f64>>> = (0..nl)
        .map(|l| {
            (0..graph.layer_len(l))
                .map(|i| graph.param_vjp(NodeId::new(l, i), trace, &feedback[l][i]))
                .collect()
        })
        .collect();
    let s_split = param_grad.iter().map(|row| row.iter().map(|g| Some(g.clone())).collect()).collect();
    Ok(PropagationResult { p_split: param_grad.clone(), s_split, feedback, param_grad })
}

/// Synthetic-gradient propagation:
/// `g̃_v = Σ_{v+} ( λ_v J_v^{v+} g̃_{v+} + (1−λ_v) J_v^{v+} h̃_{v+} )`, with
/// terminals taking the external feedback unmixed.
pub fn sgprop(
    graph: &LayeredGraph,
    trace: &ForwardTrace,
    terminal: &[Vec<f64>],
    predictors: &PredictorBank,
    lambdas: &MixWeights,
) -> Result<PropagationResult> {
    check_terminal(graph, terminal)?;
    sgprop_down_to(graph, trace, terminal, predictors, lambdas, 0)
}

pub(crate) fn sgprop_down_to(
    graph: &LayeredGraph,
    trace: &ForwardTrace,
    terminal: &[Vec<f64>],
    predictors: &PredictorBank,
    lambdas: &MixWeights,
    stop_layer: usize,
) -> Result<PropagationResult> {
    let nl = graph.num_layers();
    let zeros = |l: usize| -> Vec<Vec<f64>> {
        (0..graph.layer_len(l)).map(|i| vec![0.0; graph.n(NodeId::new(l, i)).out_dim()]).collect()
    };
    let mut feedback: Vec<Vec<Vec<f64>>> = (0..nl).map(zeros).collect();
    let mut param_grad: Vec<Vec<Vec<f64>>> = (0..nl).map(|l| vec![Vec::new(); graph.layer_len(l)]).collect();
    let mut p_split = param_grad.clone();
    let mut s_split: Vec<Vec<Option<Vec<f64>>>> = (0..nl).map(|l| vec![None; graph.layer_len(l)]).collect();

    feedback[nl - 1] = terminal.to_vec();
    for i in 0..graph.layer_len(nl - 1) {
        let id = NodeId::new(nl - 1, i);
        let g = graph.param_vjp(id, trace, &terminal[i]);
        p_split[nl - 1][i] = g.clone();
        s_split[nl - 1][i] = Some(g.clone());
        param_grad[nl - 1][i] = g;
    }

    for l in (stop_layer.max(1)..nl).rev() {
        // Children at layer l push both streams to layer l−1.
        let mut bp = zeros(l - 1);
        let mut sg: Vec<Option<Vec<f64>>> = bp.iter().map(|v| Some(v.clone())).collect();
        for i in 0..graph.layer_len(l) {
            let id = NodeId::new(l, i);
            let node = graph.n(id);
            let gz = graph.input_vjp(id, trace, &feedback[l][i]);
            let hz = match predictors.get(id) {
                Some(p) => Some(graph.input_vjp(id, trace, &p.predict(trace, id, node.out_dim())?)),
                None => None,
            };
            for (pos, e) in node.spec.parents.iter().enumerate() {
                let pi = e.parent.index;
                graph.scatter_to_parent(id, pos, &gz, &mut bp[pi]);
                match (&hz, &mut sg[pi]) {
                    (Some(h), Some(acc)) => graph.scatter_to_parent(id, pos, h, acc),
                    (None, slot) => *slot = None,
                    _ => {}
                }
            }
        }
        for (pi, (p, s)) in bp.into_iter().zip(sg).enumerate() {
            let pid = NodeId::new(l - 1, pi);
            let lam = lambdas.get(pid);
            let pg = graph.param_vjp(pid, trace, &p);
            match s {
                Some(s) => {
                    let sgp = graph.param_vjp(pid, trace, &s);
                    feedback[l - 1][pi] = mix(lam, &p, &s);
                    param_grad[l - 1][pi] = mix(lam, &pg, &sgp);
                    s_split[l - 1][pi] = Some(sgp);
                }
                None if lam == 1.0 => {
                    feedback[l - 1][pi] = p;
                    param_grad[l - 1][pi] = pg.clone();
                }
                None => bail!(Configuration, "node {pid} mixes with λ={lam} but a child has no predictor"),
            }
            p_split[l - 1][pi] = pg;
        }
    }
    Ok(PropagationResult { feedback, param_grad, p_split, s_split })
}
