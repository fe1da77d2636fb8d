use super::lambda::SplitMoments;
use crate::graph::{LayeredGraph, NodeId};
use crate::propagation::MixWeights;
use serde::Serialize;
use std::collections::HashMap;

/// Bias amplification factors `c_u = J Σ_{u+} (1 − λ_u + c_{u+})`, zero at terminals.
pub fn bias_factors(graph: &LayeredGraph, lambdas: &MixWeights, j_bound: f64) -> HashMap<NodeId, f64> {
    let mut c: HashMap<NodeId, f64> = HashMap::new();
    for l in (0..graph.num_layers()).rev() {
        for i in 0..graph.layer_len(l) {
            let id = NodeId::new(l, i);
            let v = if l == graph.terminal_layer() {
                0.0
            } else {
                j_bound * graph.children(id).iter().map(|ch| 1.0 - lambdas.get(id) + c[ch]).sum::<f64>()
            };
            c.insert(id, v);
        }
    }
    c
}

/// Variance-gain versus bias-penalty comparison. Advisory only; nothing in
/// the crate acts on `fires`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenefitReport {
    /// `(trCov p̃ − trCov s̃)/n`.
    pub lhs: f64,
    /// `(J²(ε+ε′) Σ_{children}(1 + c))²`.
    pub rhs: f64,
    pub fires: bool,
}

pub fn benefit_diagnostic(
    p: &[Vec<f64>],
    s: &[Vec<f64>],
    n: usize,
    j_bound: f64,
    eps: f64,
    eps_prime: f64,
    child_factors: &[f64],
) -> BenefitReport {
    let mut acc = SplitMoments::new(p.first().map_or(0, |v| v.len()));
    for (a, b) in p.iter().zip(s) {
        acc.push(a, b);
    }
    let (tp, ts) = acc.trace_cov();
    let lhs = (tp - ts) / n as f64;
    let rhs = (j_bound * j_bound * (eps + eps_prime) * child_factors.iter().map(|c| 1.0 + c).sum::<f64>()).powi(2);
    BenefitReport { lhs, rhs, fires: lhs > rhs }
}

/// Largest relative error `|a − n| / max(|a|, |n|, 1e-3)` between an analytic
/// gradient and central differences of `loss` at step `eps`.
pub fn finite_diff_check(loss: impl Fn(&[f64]) -> f64, params: &[f64], analytic: &[f64], eps: f64) -> f64 {
    let mut x = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = loss(&x);
        x[i] = orig - eps;
        let down = loss(&x);
        x[i] = orig;
        let num = (up - down) / (2.0 * eps);
        let a = analytic[i];
        worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-3));
    }
    worst
}
