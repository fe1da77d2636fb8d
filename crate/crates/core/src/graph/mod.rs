//! Layered DAGs of (possibly stochastic) differentiable nodes.
//!
//! Jacobians follow the transposed convention: the edge Jacobian `J_v^{v+}`
//! has shape `d_v × d_{v+}` and maps a child's feedback to the parent, and the
//! parameter Jacobian `J_v^θ` has shape `dim(θ_v) × d_v`. Internally both are
//! applied as vector-Jacobian products; [`LayeredGraph::local_jacobians`]
//! materializes them for inspection.

mod conditions;
mod feedback;
mod spec;

pub use conditions::ConditionReport;
pub use feedback::{FeedbackNoise, FeedbackSpec, Target, TerminalFeedback};
pub use spec::{GraphSpec, NodeKind, NodeNoise, NodeSpec, ParentEdge, TabularMap};

use crate::error::{bail, Result};
use crate::linalg::{axpy, dot, Mat};
use crate::rng::{stream, Rng};
use crate::slot::SlotView;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub layer: usize,
    pub index: usize,
}

impl NodeId {
    pub const fn new(layer: usize, index: usize) -> Self {
        NodeId { layer, index }
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.layer, self.index)
    }
}

/// A validated node: its spec plus derived dimensions and adjacency.
#[derive(Debug, Clone)]
pub struct Node {
    pub spec: NodeSpec,
    pub in_dim: usize,
    /// Offset of each parent edge's block inside the concatenated input.
    pub parent_offsets: Vec<usize>,
    /// `(child, position of this node in the child's parent list)`.
    pub children: Vec<(NodeId, usize)>,
}

impl Node {
    pub fn out_dim(&self) -> usize {
        self.spec.out_dim
    }
}

#[derive(Debug, Clone)]
pub struct LayeredGraph {
    layers: Vec<Vec<Node>>,
}

/// Realized noise of one node: additive offsets or 0/1 mask entries.
pub type NoiseDraw = Option<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace {
    /// Concatenated parent outputs `z_v` (the input assignment for layer 0).
    pub input: Vec<f64>,
    pub noise: NoiseDraw,
    pub output: Vec<f64>,
}

impl NodeTrace {
    /// Local observation key: bit patterns of input and noise, with −0 folded onto +0.
    pub fn obs_key(&self) -> ObsKey {
        let mut k: Vec<u64> = self.input.iter().map(|v| canonical_bits(*v)).collect();
        if let Some(n) = &self.noise {
            k.push(u64::MAX);
            k.extend(n.iter().map(|v| canonical_bits(*v)));
        }
        ObsKey(k)
    }
}

fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObsKey(pub Vec<u64>);

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub nodes: Vec<Vec<NodeTrace>>,
    /// `(master seed, sample index)` the noise was drawn from, if sampled.
    pub stream: Option<(u64, u64)>,
}

impl ForwardTrace {
    pub fn node(&self, id: NodeId) -> &NodeTrace {
        &self.nodes[id.layer][id.index]
    }
}

/// Materialized local Jacobians of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalJacobians {
    /// `(child, J_v^{child})` with shape `d_v × d_child`.
    pub edges: Vec<(NodeId, Mat)>,
    /// `J_v^θ`, shape `dim(θ_v) × d_v`.
    pub param: Mat,
}

impl LayeredGraph {
    pub fn build(spec: GraphSpec) -> Result<Self> {
        if spec.layers.len() < 2 {
            bail!(Structural, "graph needs at least an input and a terminal layer");
        }
        let mut layers: Vec<Vec<Node>> = Vec::with_capacity(spec.layers.len());
        for (l, layer) in spec.layers.into_iter().enumerate() {
            if layer.is_empty() {
                bail!(Structural, "layer {l} is empty");
            }
            let mut built = Vec::with_capacity(layer.len());
            for (i, ns) in layer.into_iter().enumerate() {
                let id = NodeId::new(l, i);
                if ns.out_dim == 0 {
                    bail!(Structural, "node {id} has zero output dim");
                }
                let (in_dim, offsets) = if l == 0 {
                    if !ns.parents.is_empty() {
                        bail!(Structural, "input node {id} has parents");
                    }
                    if !matches!(ns.kind, NodeKind::Input) {
                        bail!(Structural, "layer-0 node {id} must be an input");
                    }
                    (ns.out_dim, Vec::new())
                } else {
                    if matches!(ns.kind, NodeKind::Input) {
                        bail!(Structural, "input kind outside layer 0 at {id}");
                    }
                    if ns.parents.is_empty() {
                        bail!(Structural, "non-input node {id} has no parents");
                    }
                    let mut offs = Vec::with_capacity(ns.parents.len());
                    let mut total = 0;
                    let mut seen = std::collections::HashSet::new();
                    for e in &ns.parents {
                        if e.parent.layer + 1 != l {
                            bail!(Structural, "edge {} -> {id} does not connect adjacent layers", e.parent);
                        }
                        let Some(pn) = layers[l - 1].get(e.parent.index) else {
                            bail!(Structural, "edge from unknown node {}", e.parent);
                        };
                        if !seen.insert(e.parent.index) {
                            bail!(Structural, "duplicate edge {} -> {id}", e.parent);
                        }
                        let w = match &e.coords {
                            Some(c) => {
                                if c.is_empty() || c.iter().any(|&k| k >= pn.out_dim()) {
                                    bail!(Structural, "edge {} -> {id} projects invalid coordinates", e.parent);
                                }
                                c.len()
                            }
                            None => pn.out_dim(),
                        };
                        offs.push(total);
                        total += w;
                    }
                    (total, offs)
                };
                let want = ns.kind.param_len(in_dim, ns.out_dim)?;
                if ns.params.len() != want {
                    bail!(Structural, "node {id}: param length {} but kind needs {want}", ns.params.len());
                }
                ns.kind.validate(in_dim, ns.out_dim).map_err(|e| prefix(e, id))?;
                ns.noise.validate(ns.out_dim).map_err(|e| prefix(e, id))?;
                if l == 0 && !matches!(ns.noise, NodeNoise::None) {
                    bail!(Structural, "input node {id} cannot carry noise; randomize the input distribution instead");
                }
                built.push(Node { spec: ns, in_dim, parent_offsets: offsets, children: Vec::new() });
            }
            layers.push(built);
        }
        for l in 1..layers.len() {
            for i in 0..layers[l].len() {
                let parents: Vec<NodeId> = layers[l][i].spec.parents.iter().map(|e| e.parent).collect();
                for (pos, p) in parents.into_iter().enumerate() {
                    layers[p.layer][p.index].children.push((NodeId::new(l, i), pos));
                }
            }
        }
        Ok(LayeredGraph { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn terminal_layer(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer_len(&self, l: usize) -> usize {
        self.layers[l].len()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        match self.layers.get(id.layer).and_then(|l| l.get(id.index)) {
            Some(n) => Ok(n),
            None => bail!(Lookup, "no node {id}"),
        }
    }

    pub(crate) fn n(&self, id: NodeId) -> &Node {
        &self.layers[id.layer][id.index]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| (0..layer.len()).map(move |i| NodeId::new(l, i)))
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.n(id).spec.parents.iter().map(|e| e.parent).collect()
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.n(id).children.iter().map(|c| c.0).collect()
    }

    /// Flat index used for RNG stream tags.
    pub fn flat_index(&self, id: NodeId) -> u64 {
        let before: usize = self.layers[..id.layer].iter().map(|l| l.len()).sum();
        (before + id.index) as u64
    }

    /// Gather `z_v` from the parents' outputs.
    fn gather(&self, id: NodeId, outputs: &[Vec<NodeTrace>]) -> Vec<f64> {
        let node = self.n(id);
        let mut z = Vec::with_capacity(node.in_dim);
        for e in &node.spec.parents {
            let x = &outputs[e.parent.layer][e.parent.index].output;
            match &e.coords {
                Some(c) => z.extend(c.iter().map(|&k| x[k])),
                None => z.extend_from_slice(x),
            }
        }
        z
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.len() != self.layers[0].len() {
            bail!(Input, "expected {} input vectors, got {}", self.layers[0].len(), inputs.len());
        }
        for (i, (x, n)) in inputs.iter().zip(&self.layers[0]).enumerate() {
            if x.len() != n.out_dim() {
                bail!(Input, "input {i} has dim {} but node declares {}", x.len(), n.out_dim());
            }
        }
        Ok(())
    }

    /// Forward pass with noise drawn from per-node streams of `(master, sample)`.
    pub fn forward(&self, inputs: &[Vec<f64>], master: u64, sample: u64) -> Result<ForwardTrace> {
        self.check_inputs(inputs)?;
        let mut tr = self.forward_impl(inputs, |id, node| {
            let mut rng = stream(master, sample, self.flat_index(id));
            node.spec.noise.sample(node.out_dim(), &mut rng)
        })?;
        tr.stream = Some((master, sample));
        Ok(tr)
    }

    /// Forward pass at prescribed noise realizations (`noise[l][i]`).
    pub fn forward_with_noise(&self, inputs: &[Vec<f64>], noise: &[Vec<NoiseDraw>]) -> Result<ForwardTrace> {
        self.check_inputs(inputs)?;
        self.forward_impl(inputs, |id, _| noise[id.layer][id.index].clone())
    }

    fn forward_impl(
        &self,
        inputs: &[Vec<f64>],
        mut draw: impl FnMut(NodeId, &Node) -> NoiseDraw,
    ) -> Result<ForwardTrace> {
        let mut out: Vec<Vec<NodeTrace>> = Vec::with_capacity(self.layers.len());
        out.push(
            inputs
                .iter()
                .map(|x| NodeTrace { input: x.clone(), noise: None, output: x.clone() })
                .collect(),
        );
        for l in 1..self.layers.len() {
            let mut row = Vec::with_capacity(self.layers[l].len());
            for i in 0..self.layers[l].len() {
                let id = NodeId::new(l, i);
                let node = self.n(id);
                let z = self.gather(id, &out);
                let f = node.spec.kind.eval(&node.spec.params, &z, node.out_dim());
                let noise = draw(id, node);
                let x = node.spec.noise.apply(&f, noise.as_deref())?;
                row.push(NodeTrace { input: z, noise, output: x });
            }
            out.push(row);
        }
        Ok(ForwardTrace { nodes: out, stream: None })
    }

    /// Cotangent with respect to the pre-noise value `f`, given one w.r.t. `x`.
    fn noise_vjp(&self, id: NodeId, trace: &ForwardTrace, g_x: &[f64]) -> Vec<f64> {
        let node = self.n(id);
        match (&node.spec.noise, &trace.node(id).noise) {
            (NodeNoise::BernoulliMask { p }, Some(eta)) => {
                g_x.iter().zip(eta).map(|(g, e)| g * e / p).collect()
            }
            _ => g_x.to_vec(),
        }
    }

    /// `J_v^θ g`: parameter cotangent of node `id` for output cotangent `g`.
    pub fn param_vjp(&self, id: NodeId, trace: &ForwardTrace, g: &[f64]) -> Vec<f64> {
        let node = self.n(id);
        let gf = self.noise_vjp(id, trace, g);
        node.spec.kind.vjp_param(&node.spec.params, &trace.node(id).input, &gf, node.out_dim())
    }

    /// Cotangent of the full input `z_v` (all parent blocks concatenated).
    pub fn input_vjp(&self, id: NodeId, trace: &ForwardTrace, g: &[f64]) -> Vec<f64> {
        let node = self.n(id);
        let gf = self.noise_vjp(id, trace, g);
        node.spec.kind.vjp_input(&node.spec.params, &trace.node(id).input, &gf, node.out_dim())
    }

    /// Add the block of `g_z` (a child's input cotangent) that belongs to
    /// parent position `pos` into the parent's output-space vector `acc`.
    pub(crate) fn scatter_to_parent(&self, child: NodeId, pos: usize, g_z: &[f64], acc: &mut [f64]) {
        let node = self.n(child);
        let off = node.parent_offsets[pos];
        match &node.spec.parents[pos].coords {
            Some(c) => {
                for (j, &k) in c.iter().enumerate() {
                    acc[k] += g_z[off + j];
                }
            }
            None => {
                let len = acc.len();
                for (a, g) in acc.iter_mut().zip(&g_z[off..off + len]) {
                    *a += g;
                }
            }
        }
    }

    pub fn local_jacobians(&self, trace: &ForwardTrace, id: NodeId) -> Result<LocalJacobians> {
        let node = self.node(id)?;
        let dv = node.out_dim();
        let mut edges = Vec::with_capacity(node.children.len());
        for &(child, pos) in &node.children {
            let dc = self.n(child).out_dim();
            let mut m = Mat::zeros(dv, dc);
            for c in 0..dc {
                let mut e = vec![0.0; dc];
                e[c] = 1.0;
                let gz = self.input_vjp(child, trace, &e);
                let mut col = vec![0.0; dv];
                self.scatter_to_parent(child, pos, &gz, &mut col);
                for r in 0..dv {
                    m.set(r, c, col[r]);
                }
            }
            edges.push((child, m));
        }
        let p = node.spec.params.len();
        let mut param = Mat::zeros(p, dv);
        for c in 0..dv {
            let mut e = vec![0.0; dv];
            e[c] = 1.0;
            let col = self.param_vjp(id, trace, &e);
            for r in 0..p {
                param.set(r, c, col[r]);
            }
        }
        Ok(LocalJacobians { edges, param })
    }

    pub fn params(&self, id: NodeId) -> &[f64] {
        &self.n(id).spec.params
    }

    pub fn set_params(&mut self, id: NodeId, params: Vec<f64>) -> Result<()> {
        let node = self.layers.get_mut(id.layer).and_then(|l| l.get_mut(id.index));
        let Some(node) = node else { bail!(Lookup, "no node {id}") };
        if params.len() != node.spec.params.len() {
            bail!(Input, "param length mismatch at {id}");
        }
        node.spec.params = params;
        Ok(())
    }

    pub fn sibling_set(&self, id: NodeId) -> Vec<NodeId> {
        conditions::siblings(self, id)
    }

    pub fn extended_ancestors(&self, id: NodeId) -> Result<std::collections::BTreeSet<NodeId>> {
        conditions::extended_ancestors(self, id)
    }

    pub fn check_conditions(&self, feedback: &FeedbackSpec) -> ConditionReport {
        conditions::check(self, feedback)
    }
}

fn prefix(e: crate::error::Error, id: NodeId) -> crate::error::Error {
    use crate::error::Error::*;
    match e {
        Structural(s) => Structural(format!("node {id}: {s}")),
        Parameter(s) => Parameter(format!("node {id}: {s}")),
        other => other,
    }
}

impl NodeKind {
    pub fn param_len(&self, in_dim: usize, out: usize) -> Result<usize> {
        Ok(match self {
            NodeKind::Input | NodeKind::Identity => 0,
            NodeKind::Linear { bias } => out * in_dim + if *bias { out } else { 0 },
            NodeKind::TanhAffine => out * in_dim + out,
            NodeKind::SlotRouted { slots } => crate::slot::param_len(*slots, in_dim, out),
            NodeKind::PiecewiseTabular(t) => t.maps.iter().map(|m| m.cols).sum(),
        })
    }

    fn validate(&self, in_dim: usize, out: usize) -> Result<()> {
        match self {
            NodeKind::Identity if in_dim != out => {
                bail!(Structural, "identity node with in {in_dim} != out {out}")
            }
            NodeKind::SlotRouted { slots: 0 } => bail!(Structural, "slot-routed node needs >= 1 slot"),
            NodeKind::PiecewiseTabular(t) => {
                let r = t.keys.len();
                if r == 0 || t.maps.len() != r || t.offsets.len() != r {
                    bail!(Structural, "tabular map needs matching keys/maps/offsets");
                }
                if t.keys.iter().any(|k| k.len() != in_dim) || t.offsets.iter().any(|o| o.len() != out) {
                    bail!(Structural, "tabular key or offset dims mismatch");
                }
                if t.maps.iter().any(|m| m.rows != out) {
                    bail!(Structural, "tabular block maps must have {out} rows");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, params: &[f64], z: &[f64], out: usize) -> Vec<f64> {
        match self {
            NodeKind::Input | NodeKind::Identity => z.to_vec(),
            NodeKind::Linear { bias } => affine(params, z, out, *bias),
            NodeKind::TanhAffine => affine(params, z, out, true).into_iter().map(f64::tanh).collect(),
            NodeKind::SlotRouted { slots } => SlotView::from_flat(params, *slots, z.len(), out).forward(z).out,
            NodeKind::PiecewiseTabular(t) => {
                let r = t.select(z);
                let off = t.block_offset(r);
                let block = &params[off..off + t.maps[r].cols];
                let mut x = t.offsets[r].clone();
                for (xi, v) in x.iter_mut().zip(t.maps[r].matvec(block)) {
                    *xi += v;
                }
                x
            }
        }
    }

    pub fn vjp_input(&self, params: &[f64], z: &[f64], g: &[f64], out: usize) -> Vec<f64> {
        let n = z.len();
        match self {
            NodeKind::Input | NodeKind::Identity => g.to_vec(),
            NodeKind::Linear { .. } => {
                let mut gz = vec![0.0; n];
                for r in 0..out {
                    axpy(g[r], &params[r * n..(r + 1) * n], &mut gz);
                }
                gz
            }
            NodeKind::TanhAffine => {
                let x = self.eval(params, z, out);
                let mut gz = vec![0.0; n];
                for r in 0..out {
                    axpy(g[r] * (1.0 - x[r] * x[r]), &params[r * n..(r + 1) * n], &mut gz);
                }
                gz
            }
            NodeKind::SlotRouted { slots } => {
                let view = SlotView::from_flat(params, *slots, n, out);
                let cache = view.forward(z);
                view.vjp(z, &cache, g, None)
            }
            // Piecewise constant in z: no gradient reaches the parents.
            NodeKind::PiecewiseTabular(_) => vec![0.0; n],
        }
    }

    pub fn vjp_param(&self, params: &[f64], z: &[f64], g: &[f64], out: usize) -> Vec<f64> {
        let n = z.len();
        match self {
            NodeKind::Input | NodeKind::Identity => Vec::new(),
            NodeKind::Linear { bias } => {
                let mut gp = vec![0.0; params.len()];
                for r in 0..out {
                    axpy(g[r], z, &mut gp[r * n..(r + 1) * n]);
                    if *bias {
                        gp[out * n + r] = g[r];
                    }
                }
                gp
            }
            NodeKind::TanhAffine => {
                let x = self.eval(params, z, out);
                let mut gp = vec![0.0; params.len()];
                for r in 0..out {
                    let d = g[r] * (1.0 - x[r] * x[r]);
                    axpy(d, z, &mut gp[r * n..(r + 1) * n]);
                    gp[out * n + r] = d;
                }
                gp
            }
            NodeKind::SlotRouted { slots } => {
                let view = SlotView::from_flat(params, *slots, n, out);
                let cache = view.forward(z);
                let mut gp = vec![0.0; params.len()];
                view.vjp(z, &cache, g, Some(&mut gp));
                gp
            }
            NodeKind::PiecewiseTabular(t) => {
                let r = t.select(z);
                let off = t.block_offset(r);
                let mut gp = vec![0.0; params.len()];
                let blk = t.maps[r].tmatvec(g);
                gp[off..off + blk.len()].copy_from_slice(&blk);
                gp
            }
        }
    }
}

fn affine(params: &[f64], z: &[f64], out: usize, bias: bool) -> Vec<f64> {
    let n = z.len();
    (0..out)
        .map(|r| dot(&params[r * n..(r + 1) * n], z) + if bias { params[out * n + r] } else { 0.0 })
        .collect()
}

impl TabularMap {
    /// Index of the key nearest to `z` (ties resolve to the lowest index).
    pub fn select(&self, z: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (r, k) in self.keys.iter().enumerate() {
            let d = crate::linalg::dist2(k, z);
            if d < best.0 {
                best = (d, r);
            }
        }
        best.1
    }

    pub fn block_offset(&self, r: usize) -> usize {
        self.maps[..r].iter().map(|m| m.cols).sum()
    }
}

impl NodeNoise {
    fn validate(&self, out: usize) -> Result<()> {
        match self {
            NodeNoise::None => Ok(()),
            NodeNoise::AdditiveGaussian { sigma } if *sigma < 0.0 || !sigma.is_finite() => {
                bail!(Parameter, "gaussian sigma must be finite and >= 0")
            }
            NodeNoise::BernoulliMask { p } if !(*p > 0.0 && *p <= 1.0) => {
                bail!(Parameter, "bernoulli keep probability must lie in (0, 1]")
            }
            NodeNoise::Tabular { support, probs } => validate_table(support, probs, out),
            _ => Ok(()),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, NodeNoise::None)
    }

    pub fn sample(&self, out: usize, rng: &mut Rng) -> NoiseDraw {
        match self {
            NodeNoise::None => None,
            NodeNoise::AdditiveGaussian { sigma } => {
                Some((0..out).map(|_| sigma * crate::rng::normal(rng)).collect::<Vec<f64>>())
            }
            NodeNoise::BernoulliMask { p } => {
                Some((0..out).map(|_| if rng.random::<f64>() < *p { 1.0 } else { 0.0 }).collect())
            }
            NodeNoise::Tabular { support, probs } => Some(support[categorical(probs, rng)].clone()),
        }
    }

    pub fn apply(&self, f: &[f64], noise: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok(match (self, noise) {
            (NodeNoise::None, _) => f.to_vec(),
            (NodeNoise::BernoulliMask { p }, Some(eta)) => f.iter().zip(eta).map(|(v, e)| v * e / p).collect(),
            (NodeNoise::AdditiveGaussian { .. } | NodeNoise::Tabular { .. }, Some(xi)) => {
                f.iter().zip(xi).map(|(v, e)| v + e).collect()
            }
            (_, None) => bail!(Input, "stochastic node evaluated without a noise draw"),
        })
    }

    /// Finite support as `(draw, probability)` pairs.
    pub fn support(&self, out: usize) -> Result<Vec<(NoiseDraw, f64)>> {
        Ok(match self {
            NodeNoise::None => vec![(None, 1.0)],
            NodeNoise::AdditiveGaussian { .. } => bail!(Capability, "gaussian noise is not enumerable"),
            NodeNoise::BernoulliMask { p } => {
                if out > 16 {
                    bail!(Capability, "bernoulli mask over {out} coordinates is too large to enumerate");
                }
                (0..1usize << out)
                    .map(|bits| {
                        let eta: Vec<f64> = (0..out).map(|k| ((bits >> k) & 1) as f64).collect();
                        let ones = eta.iter().filter(|e| **e == 1.0).count() as i32;
                        (Some(eta), p.powi(ones) * (1.0 - p).powi(out as i32 - ones))
                    })
                    .filter(|(_, q)| *q > 0.0)
                    .collect()
            }
            NodeNoise::Tabular { support, probs } => support
                .iter()
                .zip(probs)
                .filter(|(_, q)| **q > 0.0)
                .map(|(s, q)| (Some(s.clone()), *q))
                .collect(),
        })
    }
}

pub(crate) fn validate_table(support: &[Vec<f64>], probs: &[f64], dim: usize) -> Result<()> {
    if support.is_empty() || support.len() != probs.len() {
        bail!(Parameter, "tabular noise needs a non-empty support with one probability each");
    }
    if support.iter().any(|s| s.len() != dim) {
        bail!(Parameter, "tabular noise support vectors must have dim {dim}");
    }
    if probs.iter().any(|p| *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        bail!(Parameter, "tabular noise probabilities must be nonnegative and sum to 1");
    }
    Ok(())
}

pub(crate) fn categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
