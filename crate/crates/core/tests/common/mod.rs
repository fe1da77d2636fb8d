//! Random graph and tabular-problem builders shared by the integration tests.
#![allow(dead_code)]

use sgprop_core::graph::{
    FeedbackNoise, FeedbackSpec, GraphSpec, LayeredGraph, NodeKind, NodeNoise, NodeSpec, ParentEdge, Target,
    TerminalFeedback,
};
use sgprop_core::propagation::{InputDistribution, TabularProblem};
use sgprop_core::rng::{normal, Rng};
use rand::Rng as _;

pub fn randn(rng: &mut Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * normal(rng)).collect()
}

pub fn params_for(kind: &NodeKind, in_dim: usize, out: usize, rng: &mut Rng) -> Vec<f64> {
    let len = kind.param_len(in_dim, out).unwrap();
    randn(rng, len, 0.8)
}

/// Random projected or full parent edges onto layer `l−1`; at least one.
pub fn parent_edges(rng: &mut Rng, l: usize, prev: &[usize], p_edge: f64, project: bool) -> Vec<ParentEdge> {
    let mut edges: Vec<ParentEdge> = Vec::new();
    for (i, &d) in prev.iter().enumerate() {
        if rng.random::<f64>() < p_edge {
            if project && d > 1 && rng.random::<bool>() {
                edges.push(ParentEdge::projected(l - 1, i, vec![rng.random_range(0..d)]));
            } else {
                edges.push(ParentEdge::full(l - 1, i));
            }
        }
    }
    if edges.is_empty() {
        edges.push(ParentEdge::full(l - 1, rng.random_range(0..prev.len())));
    }
    edges
}

fn in_dim(edges: &[ParentEdge], prev: &[usize]) -> usize {
    edges.iter().map(|e| e.coords.as_ref().map_or(prev[e.parent.index], Vec::len)).sum()
}

pub fn pick_kind(rng: &mut Rng) -> NodeKind {
    match rng.random_range(0..3) {
        0 => NodeKind::Linear { bias: rng.random() },
        1 => NodeKind::TanhAffine,
        _ => NodeKind::SlotRouted { slots: rng.random_range(1..4) },
    }
}

/// Layered graph with layer sizes `sizes` (inputs first), node dims in
/// `1..=max_dim`, differentiable kinds, and edges kept with prob `p_edge`.
pub fn random_graph(rng: &mut Rng, sizes: &[usize], max_dim: usize, p_edge: f64) -> GraphSpec {
    let mut dims: Vec<Vec<usize>> = Vec::new();
    let mut layers = Vec::new();
    for (l, &n) in sizes.iter().enumerate() {
        let d: Vec<usize> = (0..n).map(|_| rng.random_range(1..=max_dim)).collect();
        let layer = if l == 0 {
            d.iter().map(|&k| NodeSpec::input(k)).collect()
        } else {
            d.iter()
                .map(|&out| {
                    let edges = parent_edges(rng, l, &dims[l - 1], p_edge, true);
                    let kind = pick_kind(rng);
                    let p = params_for(&kind, in_dim(&edges, &dims[l - 1]), out, rng);
                    NodeSpec::new(kind, out, p, edges)
                })
                .collect()
        };
        dims.push(d);
        layers.push(layer);
    }
    GraphSpec { layers }
}

pub fn random_inputs(rng: &mut Rng, g: &LayeredGraph) -> Vec<Vec<f64>> {
    (0..g.layer_len(0))
        .map(|i| randn(rng, g.node(sgprop_core::graph::NodeId::new(0, i)).unwrap().out_dim(), 1.0))
        .collect()
}

fn two_atoms(rng: &mut Rng, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p: f64 = rng.random_range(0.2..0.8);
    let a = randn(rng, d, 0.7);
    // Zero-mean pair: p·a + (1−p)·b = 0.
    let b: Vec<f64> = a.iter().map(|v| -p * v / (1.0 - p)).collect();
    (vec![a, b], vec![p, 1.0 - p])
}

pub struct TabularShape {
    pub sizes: Vec<usize>,
    pub max_dim: usize,
    pub p_edge: f64,
    /// Node noise and feedback noise on/off.
    pub stochastic: bool,
    pub project: bool,
}

/// Enumerable problem: every input node has two support points per
/// assignment coordinate, noisy nodes carry two-atom noise, and terminals
/// get two-atom feedback noise when `stochastic`.
pub fn random_tabular(rng: &mut Rng, shape: &TabularShape) -> TabularProblem {
    let mut dims: Vec<Vec<usize>> = Vec::new();
    let mut layers = Vec::new();
    let nl = shape.sizes.len();
    for (l, &n) in shape.sizes.iter().enumerate() {
        let d: Vec<usize> = (0..n).map(|_| if l == 0 { 1 } else { rng.random_range(1..=shape.max_dim) }).collect();
        let layer = if l == 0 {
            d.iter().map(|&k| NodeSpec::input(k)).collect()
        } else {
            d.iter()
                .map(|&out| {
                    let edges = parent_edges(rng, l, &dims[l - 1], shape.p_edge, shape.project);
                    let kind = if rng.random::<bool>() { NodeKind::TanhAffine } else { NodeKind::Linear { bias: true } };
                    let p = params_for(&kind, in_dim(&edges, &dims[l - 1]), out, rng);
                    let mut spec = NodeSpec::new(kind, out, p, edges);
                    if shape.stochastic && l + 1 < nl && rng.random::<f64>() < 0.5 {
                        spec = spec.with_noise(if rng.random::<bool>() {
                            let (support, probs) = two_atoms(rng, out);
                            NodeNoise::Tabular { support, probs }
                        } else if out == 1 {
                            NodeNoise::BernoulliMask { p: rng.random_range(0.3..0.9) }
                        } else {
                            NodeNoise::None
                        });
                    }
                    spec
                })
                .collect()
        };
        dims.push(d);
        layers.push(layer);
    }
    let graph = LayeredGraph::build(GraphSpec { layers }).unwrap();
    let n_in = shape.sizes[0];
    let pts: Vec<[f64; 2]> = (0..n_in).map(|_| [rng.random_range(-1.5..0.0), rng.random_range(0.0..1.5)]).collect();
    let assigns: Vec<Vec<Vec<f64>>> =
        (0..1usize << n_in).map(|bits| (0..n_in).map(|i| vec![pts[i][(bits >> i) & 1]]).collect()).collect();
    let terminals = dims[nl - 1]
        .iter()
        .map(|&d| TerminalFeedback {
            target: Target::Constant(randn(rng, d, 1.0)),
            noise: if shape.stochastic {
                let (support, probs) = two_atoms(rng, d);
                FeedbackNoise::Tabular { support, probs }
            } else {
                FeedbackNoise::None
            },
        })
        .collect();
    TabularProblem::new(graph, InputDistribution::uniform(assigns), FeedbackSpec { terminals }).unwrap()
}

/// Scalar chain `sizes = [1, 1, …]` with optional noise at every hidden node.
pub fn noisy_chain(rng: &mut Rng, depth: usize) -> TabularProblem {
    let mut layers = vec![vec![NodeSpec::input(1)]];
    for l in 1..=depth {
        let p = randn(rng, 2, 0.9);
        let mut spec = NodeSpec::new(NodeKind::TanhAffine, 1, p, vec![ParentEdge::full(l - 1, 0)]);
        if l < depth {
            let (support, probs) = two_atoms(rng, 1);
            spec = spec.with_noise(NodeNoise::Tabular { support, probs });
        }
        layers.push(vec![spec]);
    }
    let graph = LayeredGraph::build(GraphSpec { layers }).unwrap();
    let (support, probs) = two_atoms(rng, 1);
    let fb = FeedbackSpec {
        terminals: vec![TerminalFeedback {
            target: Target::Constant(vec![0.3]),
            noise: FeedbackNoise::Tabular { support, probs },
        }],
    };
    let inputs = InputDistribution::uniform(vec![vec![vec![-1.0]], vec![vec![0.4]], vec![vec![1.2]]]);
    TabularProblem::new(graph, inputs, fb).unwrap()
}

/// Scalar loss `⟨g, x_L⟩`-style surrogate: `½‖x − t‖²` summed over terminals.
pub fn half_sq_loss(g: &LayeredGraph, tr: &sgprop_core::graph::ForwardTrace, targets: &[Vec<f64>]) -> f64 {
    let l = g.terminal_layer();
    tr.nodes[l]
        .iter()
        .zip(targets)
        .map(|(n, t)| 0.5 * n.output.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum()
}
