//! Enumerable problems: finite input support, finite noise supports.

use super::{backprop, sgprop, sgprop_down_to, MixWeights, Predictor, PredictorBank, PropagationResult};
use crate::error::{bail, Result};
use crate::graph::{FeedbackSpec, ForwardTrace, LayeredGraph, NodeId, NoiseDraw, ObsKey};
use std::collections::{BTreeMap, HashMap};

const MAX_SCENARIOS: usize = 1 << 20;

/// Finite distribution over full input assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDistribution {
    pub support: Vec<(Vec<Vec<f64>>, f64)>,
}

impl InputDistribution {
    pub fn uniform(assignments: Vec<Vec<Vec<f64>>>) -> Self {
        let p = 1.0 / assignments.len() as f64;
        InputDistribution { support: assignments.into_iter().map(|a| (a, p)).collect() }
    }
}

/// One atom of the joint distribution of inputs, node noise and feedback noise.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub prob: f64,
    pub trace: ForwardTrace,
    pub feedback: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum Mode<'a> {
    Backprop,
    Sgprop { predictors: &'a PredictorBank, lambdas: &'a MixWeights },
}

impl Mode<'_> {
    pub fn run(&self, graph: &LayeredGraph, s: &Scenario) -> Result<PropagationResult> {
        match self {
            Mode::Backprop => backprop(graph, &s.trace, &s.feedback),
            Mode::Sgprop { predictors, lambdas } => sgprop(graph, &s.trace, &s.feedback, predictors, lambdas),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TabularProblem {
    pub graph: LayeredGraph,
    pub inputs: InputDistribution,
    pub feedback: FeedbackSpec,
}

impl TabularProblem {
    pub fn new(graph: LayeredGraph, inputs: InputDistribution, feedback: FeedbackSpec) -> Result<Self> {
        feedback.validate(&graph)?;
        if inputs.support.is_empty() {
            bail!(Input, "empty input distribution");
        }
        if (inputs.support.iter().map(|s| s.1).sum::<f64>() - 1.0).abs() > 1e-9 {
            bail!(Input, "input probabilities must sum to 1");
        }
        Ok(TabularProblem { graph, inputs, feedback })
    }

    /// Every atom of the joint distribution, with its probability.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let g = &self.graph;
        let mut node_supports: Vec<(NodeId, Vec<(NoiseDraw, f64)>)> = Vec::new();
        for id in g.node_ids().filter(|id| id.layer > 0) {
            let n = g.node(id)?;
            if n.spec.noise.is_stochastic() {
                node_supports.push((id, n.spec.noise.support(n.out_dim())?));
            }
        }
        let fb_supports: Vec<_> = (0..self.feedback.terminals.len())
            .map(|i| self.feedback.support(i))
            .collect::<Result<_>>()?;
        let mut count = self.inputs.support.len();
        for s in node_supports.iter().map(|s| s.1.len()).chain(fb_supports.iter().map(|s| s.len())) {
            count = count.saturating_mul(s);
            if count > MAX_SCENARIOS {
                bail!(Capability, "joint support exceeds {MAX_SCENARIOS} atoms");
            }
        }

        let mut noise: Vec<Vec<NoiseDraw>> = (0..g.num_layers()).map(|l| vec![None; g.layer_len(l)]).collect();
        let mut out = Vec::with_capacity(count);
        for (assign, pin) in &self.inputs.support {
            if *pin == 0.0 {
                continue;
            }
            // Mixed-radix counter over node noise atoms.
            let mut idx = vec![0usize; node_supports.len()];
            loop {
                let mut p = *pin;
                for (k, (id, sup)) in node_supports.iter().enumerate() {
                    noise[id.layer][id.index] = sup[idx[k]].0.clone();
                    p *= sup[idx[k]].1;
                }
                let trace = g.forward_with_noise(assign, &noise)?;
                let mut fidx = vec![0usize; fb_supports.len()];
                loop {
                    let mut q = p;
                    let draws: Vec<Option<Vec<f64>>> = fb_supports
                        .iter()
                        .zip(&fidx)
                        .map(|(s, &j)| {
                            q *= s[j].1;
                            s[j].0.clone()
                        })
                        .collect();
                    let feedback = self.feedback.evaluate(&trace, &draws);
                    out.push(Scenario { prob: q, trace: trace.clone(), feedback });
                    if !advance(&mut fidx, |k| fb_supports[k].len()) {
                        break;
                    }
                }
                if !advance(&mut idx, |k| node_supports[k].1.len()) {
                    break;
                }
            }
        }
        Ok(out)
    }

    /// Oracle predictors `h̃_v(z) = E[g̃_v | z_v]`, built from the terminal
    /// layer downwards because `g̃` at layer `l` depends on the oracle at `l+1`.
    pub fn oracle_predictor(&self, lambdas: &MixWeights) -> Result<PredictorBank> {
        let scen = self.scenarios()?;
        let g = &self.graph;
        let mut bank = PredictorBank::default();
        for l in (1..g.num_layers()).rev() {
            let results: Vec<PropagationResult> = scen
                .iter()
                .map(|s| sgprop_down_to(g, &s.trace, &s.feedback, &bank, lambdas, l + 1))
                .collect::<Result<_>>()?;
            for i in 0..g.layer_len(l) {
                let id = NodeId::new(l, i);
                let table = conditional_means(&scen, id, |k| results[k].feedback(id).to_vec());
                bank.insert(id, Predictor::Table(table.into_iter().map(|(k, v)| (k, v.1)).collect()));
            }
        }
        Ok(bank)
    }

    /// Per-node conditional means of the propagated feedback, `E[g̃_v | z_v]`,
    /// with the probability mass of each observation.
    pub fn conditional_feedback(&self, mode: &Mode) -> Result<HashMap<NodeId, BTreeMap<ObsKey, (f64, Vec<f64>)>>> {
        let scen = self.scenarios()?;
        let results: Vec<_> = scen.iter().map(|s| mode.run(&self.graph, s)).collect::<Result<_>>()?;
        Ok(self
            .graph
            .node_ids()
            .map(|id| (id, conditional_means(&scen, id, |k| results[k].feedback(id).to_vec())))
            .collect())
    }

    /// Largest violation of conditional-mean sufficiency over all non-input
    /// nodes: `max ‖E[g_v | z_v] − E[g_v | z_v, Z_{an_sib(v)}]‖`, using the
    /// backpropagated feedback.
    pub fn condition_b_gap(&self) -> Result<f64> {
        let scen = self.scenarios()?;
        let g = &self.graph;
        let results: Vec<_> = scen.iter().map(|s| backprop(g, &s.trace, &s.feedback)).collect::<Result<_>>()?;
        let mut worst: f64 = 0.0;
        for id in g.node_ids().filter(|id| id.layer > 0) {
            let anc = g.extended_ancestors(id)?;
            let coarse = conditional_means(&scen, id, |k| results[k].feedback(id).to_vec());
            let mut fine: BTreeMap<(ObsKey, Vec<ObsKey>), (f64, Vec<f64>)> = BTreeMap::new();
            for (k, s) in scen.iter().enumerate() {
                let key = (s.trace.node(id).obs_key(), anc.iter().map(|a| s.trace.node(*a).obs_key()).collect());
                let e = fine.entry(key).or_insert_with(|| (0.0, vec![0.0; g.n(id).out_dim()]));
                e.0 += s.prob;
                crate::linalg::axpy(s.prob, results[k].feedback(id), &mut e.1);
            }
            for ((zk, _), (p, sum)) in fine {
                let c = &coarse[&zk].1;
                let gap = sum.iter().zip(c).map(|(a, b)| (a / p - b).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(gap);
            }
        }
        Ok(worst)
    }
}

fn advance(idx: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for k in 0..idx.len() {
        idx[k] += 1;
        if idx[k] < radix(k) {
            return true;
        }
        idx[k] = 0;
    }
    false
}

/// Probability-weighted mean of `value(k)` grouped by node observation.
/// Groups whose members are bitwise identical keep that exact value.
pub(crate) fn conditional_means(
    scen: &[Scenario],
    id: NodeId,
    value: impl Fn(usize) -> Vec<f64>,
) -> BTreeMap<ObsKey, (f64, Vec<f64>)> {
    let mut groups: BTreeMap<ObsKey, (f64, Vec<f64>, Option<Vec<f64>>, bool)> = BTreeMap::new();
    for (k, s) in scen.iter().enumerate() {
        let v = value(k);
        let e = groups
            .entry(s.trace.node(id).obs_key())
            .or_insert_with(|| (0.0, vec![0.0; v.len()], Some(v.clone()), true));
        e.0 += s.prob;
        crate::linalg::axpy(s.prob, &v, &mut e.1);
        if e.3 && e.2.as_deref() != Some(&v[..]) {
            e.3 = false;
        }
    }
    groups
        .into_iter()
        .map(|(key, (p, sum, first, same))| {
            let mean = if same { first.unwrap() } else { sum.iter().map(|x| x / p).collect() };
            (key, (p, mean))
        })
        .collect()
}
