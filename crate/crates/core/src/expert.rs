//! Finite-partition expert network.
//!
//! A piecewise feature node maps state `r` to `x_r ∈ {±1}^d`, with block
//! Jacobian `A_r` pulling feedback back to `θ_r`. Expert `j` sees the
//! projection `u_{j,r} = P_j x_r` and gets scalar feedback `g_{j,r}`, which is
//! constant on the class `F_j(r) = {s : P_j x_s = P_j x_r}` of size `2^{d−k}`.
//! Backprop averages feedback per state; the synthetic estimator pools each
//! class.

use crate::error::{bail, Result};
use crate::graph::{
    FeedbackNoise, FeedbackSpec, GraphSpec, LayeredGraph, NodeKind, NodeSpec, ParentEdge, TabularMap, Target,
    TerminalFeedback,
};
use crate::linalg::{dot, Mat};
use crate::propagation::{InputDistribution, TabularProblem};
use crate::rng::{stream, Rng};
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum NoiseCase {
    /// `ĝ = g + ξ`, `ξ ~ N(0, σ²)`.
    Noisy { sigma: f64 },
    /// `ĝ = (η/p) g`, `η ~ Bernoulli(p)`.
    Activation { p: f64 },
    /// `ĝ = g + α_j q`, `q ~ N(0, τ²)`, `α_j ~ N(0,1)` fixed per expert.
    Partial { tau: f64 },
}

impl NoiseCase {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseCase::Noisy { .. } => "noisy",
            NoiseCase::Activation { .. } => "activation",
            NoiseCase::Partial { .. } => "partial",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            NoiseCase::Noisy { .. } => 1,
            NoiseCase::Activation { .. } => 2,
            NoiseCase::Partial { .. } => 3,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NoiseCase::Noisy { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => bail!(Parameter, "sigma must be >= 0"),
            NoiseCase::Activation { p } if !(p > 0.0 && p <= 1.0) => bail!(Parameter, "activation p must lie in (0, 1]"),
            NoiseCase::Partial { tau } if !(tau >= 0.0 && tau.is_finite()) => bail!(Parameter, "tau must be >= 0"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpertInstance {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    /// `x_r`, enumerated lexicographically with coordinate 0 most significant.
    pub states: Vec<Vec<f64>>,
    /// `A_r`, `d×d`, entries `N(0, 1/d)`; `J_r^{θ_r} = A_rᵀ`.
    pub a_mats: Vec<Mat>,
    /// Chosen coordinates of each expert, ascending.
    pub proj: Vec<Vec<usize>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub case: NoiseCase,
    /// Per-expert scale for the partial-observation case.
    pub alpha: Vec<f64>,
    /// `P_jᵀ a_j`, the expert-path Jacobian into feature space.
    path: Vec<Vec<f64>>,
    /// Class index of `(j, r)` in `0..2^k`.
    class: Vec<Vec<usize>>,
}

pub fn state_vector(r: usize, d: usize) -> Vec<f64> {
    (0..d).map(|c| if (r >> (d - 1 - c)) & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

use crate::rng::normal;

pub fn build_expert_instance(d: usize, k: usize, m: usize, case: NoiseCase, rng: &mut Rng) -> Result<ExpertInstance> {
    if d > MAX_DIM {
        bail!(Capability, "d = {d} exceeds the enumeration budget of {MAX_DIM}");
    }
    if k == 0 || k > d {
        bail!(Parameter, "need 1 <= k <= d, got k = {k}, d = {d}");
    }
    if m == 0 {
        bail!(Parameter, "need at least one expert");
    }
    case.validate()?;
    let r_n = 1usize << d;
    let states: Vec<Vec<f64>> = (0..r_n).map(|r| state_vector(r, d)).collect();
    let sd = 1.0 / (d as f64).sqrt();
    let a_mats: Vec<Mat> =
        (0..r_n).map(|_| Mat::from_vec(d, d, (0..d * d).map(|_| sd * normal(rng)).collect())).collect();
    let proj: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let mut c = sample(rng, d, k).into_vec();
            c.sort_unstable();
            c
        })
        .collect();
    let vecs = |rng: &mut Rng, n: usize| -> Vec<Vec<f64>> { (0..m).map(|_| (0..n).map(|_| normal(rng)).collect()).collect() };
    let a = vecs(rng, k);
    let b: Vec<f64> = (0..m).map(|_| normal(rng)).collect();
    let beta = vecs(rng, k);
    let gamma: Vec<f64> = (0..m).map(|_| normal(rng)).collect();
    let alpha: Vec<f64> = (0..m).map(|_| normal(rng)).collect();

    let path = (0..m)
        .map(|j| {
            let mut v = vec![0.0; d];
            for (t, &c) in proj[j].iter().enumerate() {
                v[c] = a[j][t];
            }
            v
        })
        .collect();
    let class = (0..m)
        .map(|j| {
            (0..r_n)
                .map(|r| proj[j].iter().fold(0usize, |acc, &c| (acc << 1) | ((r >> (d - 1 - c)) & 1)))
                .collect()
        })
        .collect();
    Ok(ExpertInstance { d, k, m, states, a_mats, proj, a, b, beta, gamma, case, alpha, path, class })
}

impl ExpertInstance {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn projected(&self, j: usize, r: usize) -> Vec<f64> {
        self.proj[j].iter().map(|&c| self.states[r][c]).collect()
    }

    /// `F_j(r)`.
    pub fn class_members(&self, j: usize, r: usize) -> Vec<usize> {
        let c = self.class[j][r];
        (0..self.num_states()).filter(|&s| self.class[j][s] == c).collect()
    }

    pub fn class_index(&self, j: usize, r: usize) -> usize {
        self.class[j][r]
    }

    /// `g_{j,r} = (a_jᵀu + b_j) − (β_jᵀu + γ_j)`.
    pub fn clean_feedback(&self, j: usize, r: usize) -> f64 {
        let u = self.projected(j, r);
        (dot(&self.a[j], &u) + self.b[j]) - (dot(&self.beta[j], &u) + self.gamma[j])
    }

    pub fn sample_feedback(&self, j: usize, r: usize, rng: &mut Rng) -> f64 {
        let g = self.clean_feedback(j, r);
        self.corrupt(j, g, rng)
    }

    fn corrupt(&self, j: usize, g: f64, rng: &mut Rng) -> f64 {
        match self.case {
            NoiseCase::Noisy { sigma } => g + sigma * normal(rng),
            NoiseCase::Activation { p } => {
                if p == 1.0 || rng.random::<f64>() < p {
                    g / p
                } else {
                    0.0
                }
            }
            NoiseCase::Partial { tau } => g + self.alpha[j] * tau * normal(rng),
        }
    }

    /// Feedback variance `v_{j,r}` of one draw.
    pub fn feedback_variance(&self, j: usize, r: usize) -> f64 {
        match self.case {
            NoiseCase::Noisy { sigma } => sigma * sigma,
            NoiseCase::Activation { p } => self.clean_feedback(j, r).powi(2) * (1.0 - p) / p,
            NoiseCase::Partial { tau } => (self.alpha[j] * tau).powi(2),
        }
    }

    pub fn path_jacobian(&self, j: usize) -> &[f64] {
        &self.path[j]
    }

    /// Block `(1/R) A_rᵀ Σ_j P_jᵀ a_j f_j` for per-expert feedback `f`.
    fn block(&self, r: usize, f: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; self.d];
        for (j, fj) in f.iter().enumerate() {
            crate::linalg::axpy(*fj, &self.path[j], &mut e);
        }
        let inv = 1.0 / self.num_states() as f64;
        self.a_mats[r].tmatvec(&e).into_iter().map(|v| v * inv).collect()
    }

    /// Exact `E g^θ = (1/R)(g^{θ_1}, …, g^{θ_R})`.
    pub fn population_gradient(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_states() * self.d);
        for r in 0..self.num_states() {
            let f: Vec<f64> = (0..self.m).map(|j| self.clean_feedback(j, r)).collect();
            out.extend(self.block(r, &f));
        }
        out
    }

    /// One batch of draws `ĝ[j][r][i]`, `i < n`.
    pub fn draw(&self, n: usize, rng: &mut Rng) -> Vec<Vec<Vec<f64>>> {
        (0..self.m)
            .map(|j| {
                (0..self.num_states())
                    .map(|r| {
                        let g = self.clean_feedback(j, r);
                        (0..n).map(|_| self.corrupt(j, g, rng)).collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Per-state averaging.
    pub fn bp_from_draws(&self, draws: &[Vec<Vec<f64>>]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_states() * self.d);
        for r in 0..self.num_states() {
            let f: Vec<f64> = (0..self.m).map(|j| mean(&draws[j][r])).collect();
            out.extend(self.block(r, &f));
        }
        out
    }

    /// Class-pooled conditional means: every state in `F_j(r)` shares one
    /// table entry averaging `n·2^{d−k}` draws.
    pub fn sg_table(&self, draws: &[Vec<Vec<f64>>]) -> Vec<Vec<(f64, usize)>> {
        (0..self.m)
            .map(|j| {
                let mut acc = vec![(0.0, 0usize); 1 << self.k];
                for r in 0..self.num_states() {
                    let e = &mut acc[self.class[j][r]];
                    e.0 += draws[j][r].iter().sum::<f64>();
                    e.1 += draws[j][r].len();
                }
                acc.into_iter().map(|(s, c)| (s / c as f64, c)).collect()
            })
            .collect()
    }

    pub fn sg_from_draws(&self, draws: &[Vec<Vec<f64>>]) -> Vec<f64> {
        let table = self.sg_table(draws);
        let mut out = Vec::with_capacity(self.num_states() * self.d);
        for r in 0..self.num_states() {
            let f: Vec<f64> = (0..self.m).map(|j| table[j][self.class[j][r]].0).collect();
            out.extend(self.block(r, &f));
        }
        out
    }

    pub fn bp_estimator(&self, n: usize, rng: &mut Rng) -> Vec<f64> {
        self.bp_from_draws(&self.draw(n, rng))
    }

    pub fn sg_estimator(&self, n: usize, rng: &mut Rng) -> Vec<f64> {
        self.sg_from_draws(&self.draw(n, rng))
    }

    /// Both estimators on shared draws.
    pub fn paired_estimators(&self, n: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
        let draws = self.draw(n, rng);
        (self.bp_from_draws(&draws), self.sg_from_draws(&draws))
    }

    /// Exact backprop MSE `(1/R²) Σ_r (1/n) Σ_j ‖A_rᵀ P_jᵀ a_j‖² v_{j,r}`.
    pub fn bp_mse_exact(&self, n: usize) -> f64 {
        let r_n = self.num_states() as f64;
        let mut tot = 0.0;
        for r in 0..self.num_states() {
            for j in 0..self.m {
                let jj = self.a_mats[r].tmatvec(&self.path[j]);
                tot += crate::linalg::norm2(&jj) * self.feedback_variance(j, r) / n as f64;
            }
        }
        tot / (r_n * r_n)
    }

    /// Exact pooled-estimator MSE; each class mean has variance
    /// `mean_{s∈F} v_{j,s} / (n |F|)`.
    pub fn sg_mse_exact(&self, n: usize) -> f64 {
        let r_n = self.num_states() as f64;
        let size = (1usize << (self.d - self.k)) as f64;
        let mut tot = 0.0;
        for j in 0..self.m {
            let mut class_var = vec![0.0; 1 << self.k];
            for r in 0..self.num_states() {
                class_var[self.class[j][r]] += self.feedback_variance(j, r);
            }
            for r in 0..self.num_states() {
                let v = class_var[self.class[j][r]] / size / (n as f64 * size);
                let jj = self.a_mats[r].tmatvec(&self.path[j]);
                tot += crate::linalg::norm2(&jj) * v;
            }
        }
        tot / (r_n * r_n)
    }

    /// The same instance as an enumerable graph: state input → piecewise
    /// feature node → projected linear experts → identity collector whose
    /// target is a second input carrying `t_j(u_{j,r})`.
    pub fn to_tabular_problem(&self, feedback_noise: FeedbackNoise) -> Result<TabularProblem> {
        let (d, m, r_n) = (self.d, self.m, self.num_states());
        let feature = NodeSpec::new(
            NodeKind::PiecewiseTabular(TabularMap {
                keys: self.states.clone(),
                offsets: self.states.clone(),
                maps: self.a_mats.clone(),
            }),
            d,
            vec![0.0; r_n * d],
            vec![ParentEdge::full(0, 0)],
        );
        let experts = (0..m)
            .map(|j| {
                let mut p = self.a[j].clone();
                p.push(self.b[j]);
                NodeSpec::new(NodeKind::Linear { bias: true }, 1, p, vec![ParentEdge::projected(1, 0, self.proj[j].clone())])
            })
            .collect();
        let collector =
            NodeSpec::new(NodeKind::Identity, m, Vec::new(), (0..m).map(|j| ParentEdge::full(2, j)).collect());
        let graph = LayeredGraph::build(GraphSpec {
            layers: vec![vec![NodeSpec::input(d), NodeSpec::input(m)], vec![feature], experts, vec![collector]],
        })?;
        let inputs = InputDistribution::uniform(
            (0..r_n)
                .map(|r| {
                    let t: Vec<f64> = (0..m)
                        .map(|j| dot(&self.beta[j], &self.projected(j, r)) + self.gamma[j])
                        .collect();
                    vec![self.states[r].clone(), t]
                })
                .collect(),
        );
        let feedback = FeedbackSpec { terminals: vec![TerminalFeedback { target: Target::Input(1), noise: feedback_noise }] };
        TabularProblem::new(graph, inputs, feedback)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sq_error(est: &[f64], truth: &[f64]) -> f64 {
    crate::linalg::dist2(est, truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub d: Vec<usize>,
    pub k: Vec<usize>,
    pub cases: Vec<NoiseCase>,
    pub m: usize,
    pub trials: usize,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub d: usize,
    pub k: usize,
    pub case: String,
    pub trials: usize,
    pub n: usize,
    /// Mean over trials of the per-trial ratio.
    pub ratio_mean: f64,
    pub ratio_sem: f64,
    pub mse_bp: f64,
    pub mse_sg: f64,
    /// `mse_bp / mse_sg`, the ratio of trial-mean MSEs.
    pub ratio_of_means: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub mse_bp: f64,
    pub mse_sg: f64,
}

/// One trial: a fresh instance and one paired draw, from its own stream.
pub fn run_trial(d: usize, k: usize, m: usize, case: NoiseCase, n: usize, seed: u64, trial: u64) -> Result<TrialOutcome> {
    let tag = ((d as u64) << 32) | ((k as u64) << 16) | case.tag();
    let mut rng = stream(seed, trial, tag);
    let inst = build_expert_instance(d, k, m, case, &mut rng)?;
    let truth = inst.population_gradient();
    let (bp, sg) = inst.paired_estimators(n, &mut rng);
    Ok(TrialOutcome { mse_bp: sq_error(&bp, &truth), mse_sg: sq_error(&sg, &truth) })
}

pub fn mse_ratio_sweep(cfg: &SweepConfig) -> Result<Vec<RatioRow>> {
    if cfg.trials == 0 || cfg.n == 0 {
        bail!(Parameter, "trials and n must be >= 1");
    }
    let mut grid = Vec::new();
    for &d in &cfg.d {
        for &k in &cfg.k {
            if k <= d {
                for case in &cfg.cases {
                    grid.push((d, k, *case));
                }
            }
        }
    }
    grid.into_par_iter()
        .map(|(d, k, case)| {
            let outcomes: Vec<TrialOutcome> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| run_trial(d, k, cfg.m, case, cfg.n, cfg.seed, t))
                .collect::<Result<_>>()?;
            Ok(summarize(d, k, case, cfg.n, &outcomes))
        })
        .collect()
}

pub fn summarize(d: usize, k: usize, case: NoiseCase, n: usize, outcomes: &[TrialOutcome]) -> RatioRow {
    let t = outcomes.len() as f64;
    let ratios: Vec<f64> = outcomes.iter().map(|o| o.mse_bp / o.mse_sg).collect();
    let ratio_mean = ratios.iter().sum::<f64>() / t;
    let ratio_sem = if outcomes.len() > 1 {
        (ratios.iter().map(|r| (r - ratio_mean).powi(2)).sum::<f64>() / (t - 1.0) / t).sqrt()
    } else {
        0.0
    };
    let mse_bp = outcomes.iter().map(|o| o.mse_bp).sum::<f64>() / t;
    let mse_sg = outcomes.iter().map(|o| o.mse_sg).sum::<f64>() / t;
    RatioRow {
        d,
        k,
        case: case.name().to_string(),
        trials: outcomes.len(),
        n,
        ratio_mean,
        ratio_sem,
        mse_bp,
        mse_sg,
        ratio_of_means: mse_bp / mse_sg,
    }
}

/// Least-squares slope of `log2(ratio_of_means)` on `d − k`.
pub fn log_ratio_slope(rows: &[RatioRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.d - r.k) as f64, r.ratio_of_means.log2())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
