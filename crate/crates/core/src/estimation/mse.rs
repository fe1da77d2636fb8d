use crate::error::{bail, Result};
use crate::graph::{NodeId, ObsKey};
use crate::linalg::{axpy, dist2, mean_vec};
use crate::propagation::{backprop, Mode, TabularProblem};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

/// `Δ̃² = (ρ̃² + ν̃²)/n + b̃²` for the empirical mean of `n` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseDecomposition {
    /// Expected conditional variance `E‖g̃ − E[g̃|z]‖²`.
    pub rho2: f64,
    /// Variance of the conditional mean `E‖E[g̃|z] − E g̃‖²`.
    pub nu2: f64,
    /// Squared bias `‖E g̃ − E g‖²` against the backprop mean.
    pub bias2: f64,
    pub delta2: f64,
    pub n: usize,
}

/// Exact per-node moments of a propagation mode's parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMoments {
    pub mean: Vec<f64>,
    /// Backprop population mean `E g^θ_v`.
    pub reference: Vec<f64>,
    pub rho2: f64,
    pub nu2: f64,
    pub bias2: f64,
    /// `E‖g̃ − E g‖²`, computed directly from the atoms.
    pub raw2: f64,
}

impl NodeMoments {
    /// MSE of the `n`-sample mean from raw moments:
    /// `(1/n) E‖g̃ − m‖² + (1 − 1/n) ‖E g̃ − m‖²`.
    pub fn delta2(&self, n: usize) -> f64 {
        let n = n as f64;
        self.raw2 / n + (1.0 - 1.0 / n) * self.bias2
    }

    pub fn decomposition(&self, n: usize) -> MseDecomposition {
        MseDecomposition { rho2: self.rho2, nu2: self.nu2, bias2: self.bias2, delta2: self.delta2(n), n }
    }
}

/// Exact moments at every node for `mode`, by enumerating the joint support.
pub fn exact_moments(problem: &TabularProblem, mode: &Mode) -> Result<HashMap<NodeId, NodeMoments>> {
    let g = &problem.graph;
    let scen = problem.scenarios()?;
    let bp: Vec<_> = scen.iter().map(|s| backprop(g, &s.trace, &s.feedback)).collect::<Result<_>>()?;
    let run: Vec<_> = match mode {
        Mode::Backprop => bp.clone(),
        _ => scen.iter().map(|s| mode.run(g, s)).collect::<Result<_>>()?,
    };
    let mut out = HashMap::new();
    for id in g.node_ids() {
        let dim = g.params(id).len();
        let weighted_mean = |res: &[crate::propagation::PropagationResult]| {
            let mut m = vec![0.0; dim];
            for (s, r) in scen.iter().zip(res) {
                axpy(s.prob, r.param_grad(id), &mut m);
            }
            m
        };
        let reference = weighted_mean(&bp);
        let mean = weighted_mean(&run);
        let cond = crate::propagation::tabular_conditional(&scen, id, |k| run[k].param_grad(id).to_vec());
        let mut rho2 = 0.0;
        let mut raw2 = 0.0;
        for (k, s) in scen.iter().enumerate() {
            let gk = run[k].param_grad(id);
            rho2 += s.prob * dist2(gk, &cond[&s.trace.node(id).obs_key()].1);
            raw2 += s.prob * dist2(gk, &reference);
        }
        let nu2: f64 = cond.values().map(|(p, c)| p * dist2(c, &mean)).sum();
        let bias2 = dist2(&mean, &reference);
        out.insert(id, NodeMoments { mean, reference, rho2, nu2, bias2, raw2 });
    }
    Ok(out)
}

pub fn mse_decomposition_exact(problem: &TabularProblem, mode: &Mode, node: NodeId, n: usize) -> Result<MseDecomposition> {
    if n == 0 {
        bail!(Contract, "sample count must be >= 1");
    }
    problem.graph.node(node)?;
    Ok(exact_moments(problem, mode)?[&node].decomposition(n))
}

/// Per-node samples of a parameter gradient, optionally keyed by observation
/// and carrying the `(p̃, s̃)` split.
#[derive(Debug, Clone, Default)]
pub struct GradSampleSet {
    pub grads: Vec<Vec<f64>>,
    pub keys: Option<Vec<ObsKey>>,
    pub split: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

impl GradSampleSet {
    pub fn new(grads: Vec<Vec<f64>>) -> Self {
        GradSampleSet { grads, keys: None, split: None }
    }

    pub fn with_keys(mut self, keys: Vec<ObsKey>) -> Self {
        self.keys = Some(keys);
        self
    }

    fn validate(&self) -> Result<()> {
        let Some(first) = self.grads.first() else { bail!(Contract, "empty sample set") };
        if self.grads.iter().any(|g| g.len() != first.len()) {
            bail!(Contract, "samples disagree in dimension");
        }
        if let Some(k) = &self.keys {
            if k.len() != self.grads.len() {
                bail!(Contract, "one conditioning key per sample required");
            }
        }
        Ok(())
    }
}

pub fn empirical_mean_gradient(samples: &GradSampleSet) -> Result<Vec<f64>> {
    samples.validate()?;
    Ok(mean_vec(&samples.grads))
}

/// Plug-in MSE estimates from samples. These are consistent but biased at
/// small sample counts; `nu2` in particular carries the within-group noise
/// of the group means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMse {
    /// `mean ‖g_i − m‖²`, the single-sample MSE estimate.
    pub delta2: f64,
    pub delta2_se: f64,
    pub bias2: f64,
    pub rho2: Option<f64>,
    pub nu2: Option<f64>,
    pub samples: usize,
}

impl EmpiricalMse {
    /// Extrapolated MSE of an `n`-sample mean.
    pub fn delta2_at(&self, n: usize) -> f64 {
        let n = n as f64;
        self.delta2 / n + (1.0 - 1.0 / n) * self.bias2
    }
}

pub fn mse_decomposition_empirical(samples: &GradSampleSet, reference: &[f64]) -> Result<EmpiricalMse> {
    samples.validate()?;
    let n = samples.grads.len();
    if reference.len() != samples.grads[0].len() {
        bail!(Contract, "reference mean has the wrong dimension");
    }
    let errs: Vec<f64> = samples.grads.iter().map(|g| dist2(g, reference)).collect();
    let delta2 = errs.iter().sum::<f64>() / n as f64;
    let delta2_se = if n > 1 {
        (errs.iter().map(|e| (e - delta2).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
    } else {
        f64::NAN
    };
    let mean = mean_vec(&samples.grads);
    let bias2 = dist2(&mean, reference);

    let (mut rho2, mut nu2) = (None, None);
    if let Some(keys) = &samples.keys {
        let mut groups: BTreeMap<&ObsKey, Vec<usize>> = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            groups.entry(k).or_default().push(i);
        }
        let mut within = 0.0;
        let mut weight = 0usize;
        let mut between = 0.0;
        for idx in groups.values() {
            let gm = mean_vec(&idx.iter().map(|&i| samples.grads[i].clone()).collect::<Vec<_>>());
            between += idx.len() as f64 * dist2(&gm, &mean);
            if idx.len() >= 2 {
                let ss: f64 = idx.iter().map(|&i| dist2(&samples.grads[i], &gm)).sum();
                within += idx.len() as f64 * ss / (idx.len() - 1) as f64;
                weight += idx.len();
            }
        }
        if weight == 0 {
            bail!(Statistics, "every conditioning group has fewer than 2 samples");
        }
        rho2 = Some(within / weight as f64);
        nu2 = Some(between / n as f64);
    }
    Ok(EmpiricalMse { delta2, delta2_se, bias2, rho2, nu2, samples: n })
}
