//! Enumeration-exact invariant suite over small tabular problems.

use anyhow::Result;
use rand::Rng as _;
use sgprop_core::estimation::exact_moments;
use sgprop_core::expert::{build_expert_instance, NoiseCase};
use sgprop_core::graph::{
    FeedbackNoise, FeedbackSpec, GraphSpec, LayeredGraph, NodeKind, NodeNoise, NodeSpec, ParentEdge, Target,
    TerminalFeedback,
};
use sgprop_core::propagation::{InputDistribution, MixWeights, Mode, PredictorBank, TabularProblem};
use sgprop_core::rng::{normal, seeded, Rng};

pub struct CheckRow {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

fn randn(rng: &mut Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * normal(rng)).collect()
}

/// Two support points with mean zero.
fn two_atoms(rng: &mut Rng, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p: f64 = rng.random_range(0.2..0.8);
    let a = randn(rng, d, 0.7);
    let b = a.iter().map(|v| -p * v / (1.0 - p)).collect();
    (vec![a, b], vec![p, 1.0 - p])
}

/// Fully connected graph over `sizes` (inputs first, scalar inputs with two
/// support points each). With `stochastic`, hidden nodes carry two-atom noise
/// and terminals get two-atom feedback noise.
fn layered(rng: &mut Rng, sizes: &[usize], stochastic: bool) -> Result<TabularProblem> {
    let mut dims: Vec<Vec<usize>> = Vec::new();
    let mut layers = Vec::new();
    for (l, &n) in sizes.iter().enumerate() {
        let d: Vec<usize> = (0..n).map(|_| if l == 0 { 1 } else { rng.random_range(1..=2) }).collect();
        let layer = if l == 0 {
            d.iter().map(|&k| NodeSpec::input(k)).collect()
        } else {
            let in_dim: usize = dims[l - 1].iter().sum();
            d.iter()
                .map(|&out| {
                    let kind = if rng.random::<bool>() { NodeKind::TanhAffine } else { NodeKind::Linear { bias: true } };
                    let params = randn(rng, kind.param_len(in_dim, out)?, 0.8);
                    let edges = (0..sizes[l - 1]).map(|i| ParentEdge::full(l - 1, i)).collect();
                    let mut spec = NodeSpec::new(kind, out, params, edges);
                    if stochastic && l + 1 < sizes.len() && rng.random::<bool>() {
                        let (support, probs) = two_atoms(rng, out);
                        spec = spec.with_noise(NodeNoise::Tabular { support, probs });
                    }
                    Ok(spec)
                })
                .collect::<Result<Vec<_>>>()?
        };
        dims.push(d);
        layers.push(layer);
    }
    let graph = LayeredGraph::build(GraphSpec { layers })?;
    let n_in = sizes[0];
    let pts: Vec<[f64; 2]> = (0..n_in).map(|_| [rng.random_range(-1.5..0.0), rng.random_range(0.0..1.5)]).collect();
    let assigns =
        (0..1usize << n_in).map(|bits| (0..n_in).map(|i| vec![pts[i][(bits >> i) & 1]]).collect()).collect();
    let terminals = dims
        .last()
        .unwrap()
        .iter()
        .map(|&d| TerminalFeedback {
            target: Target::Constant(randn(rng, d, 1.0)),
            noise: if stochastic {
                let (support, probs) = two_atoms(rng, d);
                FeedbackNoise::Tabular { support, probs }
            } else {
                FeedbackNoise::None
            },
        })
        .collect();
    Ok(TabularProblem::new(graph, InputDistribution::uniform(assigns), FeedbackSpec { terminals })?)
}

/// Scalar tanh chain with two-atom noise at every hidden node.
fn chain(rng: &mut Rng, depth: usize) -> Result<TabularProblem> {
    let mut layers = vec![vec![NodeSpec::input(1)]];
    for l in 1..=depth {
        let mut spec = NodeSpec::new(NodeKind::TanhAffine, 1, randn(rng, 2, 0.9), vec![ParentEdge::full(l - 1, 0)]);
        if l < depth {
            let (support, probs) = two_atoms(rng, 1);
            spec = spec.with_noise(NodeNoise::Tabular { support, probs });
        }
        layers.push(vec![spec]);
    }
    let graph = LayeredGraph::build(GraphSpec { layers })?;
    let (support, probs) = two_atoms(rng, 1);
    let feedback = FeedbackSpec {
        terminals: vec![TerminalFeedback {
            target: Target::Constant(vec![0.3]),
            noise: FeedbackNoise::Tabular { support, probs },
        }],
    };
    let inputs = InputDistribution::uniform(vec![vec![vec![-1.0]], vec![vec![0.4]], vec![vec![1.2]]]);
    Ok(TabularProblem::new(graph, inputs, feedback)?)
}

/// Sparse expert networks and noisy chains: every one declares a source of
/// uncertainty and has node-sufficient observations.
fn sparse_instances(seed: u64, count: usize) -> Result<Vec<TabularProblem>> {
    let cases = [NoiseCase::Noisy { sigma: 1.0 }, NoiseCase::Activation { p: 0.5 }, NoiseCase::Partial { tau: 1.0 }];
    let mut out = Vec::new();
    for i in 0..count as u64 {
        let mut rng = seeded(seed.wrapping_add(3000 + i));
        if i % 2 == 0 {
            let inst = build_expert_instance(4, 2, 3, cases[(i / 2) as usize % 3], &mut rng)?;
            let noise = if i % 4 == 0 {
                FeedbackNoise::Tabular { support: vec![vec![0.8; 3], vec![-0.8; 3]], probs: vec![0.5, 0.5] }
            } else {
                FeedbackNoise::BernoulliScale { p: 0.5 }
            };
            out.push(inst.to_tabular_problem(noise)?);
        } else {
            out.push(chain(&mut rng, 4)?);
        }
    }
    Ok(out)
}

fn decomposition(seed: u64, count: usize) -> Result<CheckRow> {
    let mut problems = Vec::new();
    for i in 0..count as u64 {
        let mut rng = seeded(seed.wrapping_add(1000 + i));
        let sizes: Vec<usize> = (0..rng.random_range(2..=3)).map(|_| rng.random_range(1..=3)).collect();
        problems.push(layered(&mut rng, &sizes, true)?);
    }
    problems.extend(sparse_instances(seed, 4)?);
    let mut worst: f64 = 0.0;
    for prob in &problems {
        let half = MixWeights::uniform(&prob.graph, 0.5)?;
        let zeros = PredictorBank::zeros(&prob.graph);
        let oracle = prob.oracle_predictor(&half)?;
        for mode in [
            Mode::Backprop,
            Mode::Sgprop { predictors: &zeros, lambdas: &half },
            Mode::Sgprop { predictors: &oracle, lambdas: &half },
        ] {
            for m in exact_moments(prob, &mode)?.values() {
                for n in [1usize, 2, 10] {
                    let want = (m.rho2 + m.nu2) / n as f64 + m.bias2;
                    worst = worst.max((m.delta2(n) - want).abs() / (1.0 + want));
                }
            }
        }
    }
    let tolerance = 1e-9;
    Ok(CheckRow {
        name: "mse decomposition",
        instances: problems.len(),
        worst,
        tolerance,
        pass: worst <= tolerance,
        note: "3 modes, n in {1,2,10}".into(),
    })
}

fn deterministic_rho(seed: u64, count: usize) -> Result<CheckRow> {
    let mut worst: f64 = 0.0;
    for i in 0..count as u64 {
        let mut rng = seeded(seed.wrapping_add(2000 + i));
        let sizes: Vec<usize> = (0..3).map(|_| rng.random_range(1..=3)).collect();
        let prob = layered(&mut rng, &sizes, false)?;
        for m in exact_moments(&prob, &Mode::Backprop)?.values() {
            worst = worst.max(m.rho2);
        }
    }
    Ok(CheckRow {
        name: "deterministic rho^2 = 0",
        instances: count,
        worst,
        tolerance: 0.0,
        pass: worst == 0.0,
        note: "backprop, fully connected".into(),
    })
}

fn oracle(seed: u64, count: usize) -> Result<[CheckRow; 2]> {
    let (mut bias, mut excess): (f64, f64) = (0.0, f64::NEG_INFINITY);
    let mut notes = Vec::new();
    for (i, prob) in sparse_instances(seed, count)?.iter().enumerate() {
        let report = prob.graph.check_conditions(&prob.feedback);
        let gap = prob.condition_b_gap()?;
        if gap > 1e-12 || !report.any() {
            notes.push(format!("#{i} outside preconditions"));
            continue;
        }
        let zero = MixWeights::uniform(&prob.graph, 0.0)?;
        let bank = prob.oracle_predictor(&zero)?;
        let sg = Mode::Sgprop { predictors: &bank, lambdas: &zero };
        let cb = prob.conditional_feedback(&Mode::Backprop)?;
        let cs = prob.conditional_feedback(&sg)?;
        for (v, groups) in &cb {
            for (k, (_, m)) in groups {
                let s = &cs[v][k].1;
                bias = bias.max(m.iter().zip(s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
        let mb = exact_moments(prob, &Mode::Backprop)?;
        let ms = exact_moments(prob, &sg)?;
        let mut strict = false;
        for v in prob.graph.node_ids() {
            let (a, b) = (ms[&v].delta2(1), mb[&v].delta2(1));
            excess = excess.max(a - b);
            strict |= a < b - 1e-9 * (1.0 + b);
        }
        if !strict {
            notes.push(format!("#{i} no strict improvement"));
        }
    }
    let note = if notes.is_empty() { String::new() } else { notes.join("; ") };
    Ok([
        CheckRow {
            name: "oracle conditionally unbiased",
            instances: count,
            worst: bias,
            tolerance: 1e-12,
            pass: bias < 1e-12 && notes.is_empty(),
            note: note.clone(),
        },
        CheckRow {
            name: "oracle mse <= backprop mse",
            instances: count,
            worst: excess,
            tolerance: 1e-12,
            pass: excess <= 1e-12 && notes.is_empty(),
            note: if note.is_empty() { "strict at >= 1 node each".into() } else { note },
        },
    ])
}

pub fn run_all(seed: u64, count: usize) -> Result<Vec<CheckRow>> {
    let mut rows = vec![decomposition(seed, count)?, deterministic_rho(seed, count)?];
    rows.extend(oracle(seed, count)?);
    Ok(rows)
}

pub fn render(rows: &[CheckRow]) -> String {
    let mut s = format!("{:<32} {:>9} {:>11} {:>9}  status\n", "check", "instances", "worst", "tol");
    for r in rows {
        s += &format!(
            "{:<32} {:>9} {:>11.3e} {:>9.0e}  {}{}\n",
            r.name,
            r.instances,
            r.worst,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" },
            if r.note.is_empty() { String::new() } else { format!("  ({})", r.note) }
        );
    }
    s
}
