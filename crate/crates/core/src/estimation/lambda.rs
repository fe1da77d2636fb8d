use crate::error::{bail, Result};
use crate::linalg::{dot, norm2};
use serde::Serialize;

/// Degenerate when `E‖ŝ − p̂‖²` falls below this fraction of the sample scale.
pub const DEGENERATE_TOL: f64 = 1e-12;
/// Norm floor used by unit-norm normalization.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub lambda: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub degenerate: bool,
}

/// Running sums of aligned `(p, s)` draws; enough to evaluate every plug-in
/// moment of the closed form without keeping the samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitMoments {
    pub count: usize,
    pub sum_p: Vec<f64>,
    pub sum_s: Vec<f64>,
    pub sum_pp: f64,
    pub sum_ss: f64,
    pub sum_sp: f64,
}

impl SplitMoments {
    pub fn new(dim: usize) -> Self {
        SplitMoments { sum_p: vec![0.0; dim], sum_s: vec![0.0; dim], ..Default::default() }
    }

    pub fn push(&mut self, p: &[f64], s: &[f64]) {
        debug_assert_eq!(p.len(), self.sum_p.len());
        crate::linalg::add_into(p, &mut self.sum_p);
        crate::linalg::add_into(s, &mut self.sum_s);
        self.sum_pp += norm2(p);
        self.sum_ss += norm2(s);
        self.sum_sp += dot(s, p);
        self.count += 1;
    }

    pub fn push_normalized(&mut self, p: &[f64], s: &[f64]) {
        let np = norm2(p).sqrt().max(NORM_FLOOR);
        let ns = norm2(s).sqrt().max(NORM_FLOOR);
        let p: Vec<f64> = p.iter().map(|v| v / np).collect();
        let s: Vec<f64> = s.iter().map(|v| v / ns).collect();
        self.push(&p, &s);
    }

    pub fn mean_p(&self) -> Vec<f64> {
        self.sum_p.iter().map(|v| v / self.count as f64).collect()
    }

    pub fn mean_s(&self) -> Vec<f64> {
        self.sum_s.iter().map(|v| v / self.count as f64).collect()
    }

    /// Total variances `(trCov p, trCov s)` with the `1/N` convention.
    pub fn trace_cov(&self) -> (f64, f64) {
        let c = self.count as f64;
        (self.sum_pp / c - norm2(&self.mean_p()), self.sum_ss / c - norm2(&self.mean_s()))
    }

    /// Closed-form minimizer over `λ ∈ [0,1]` of
    /// `E‖λ p̂ + (1−λ) ŝ − m‖²` where `p̂, ŝ` are `n`-sample means.
    pub fn lambda_star(&self, reference: &[f64], n: usize) -> Result<LambdaEstimate> {
        if self.count == 0 {
            bail!(Contract, "no samples");
        }
        if n == 0 {
            bail!(Contract, "effective sample count must be >= 1");
        }
        let c = self.count as f64;
        let m = reference;
        let pb = self.mean_p();
        let sb = self.mean_s();
        let mm = norm2(m);
        // Single-draw moments about m.
        let ss1 = self.sum_ss / c - 2.0 * dot(&sb, m) + mm;
        let pp1 = self.sum_pp / c - 2.0 * dot(&pb, m) + mm;
        let sp1 = self.sum_sp / c - dot(&sb, m) - dot(&pb, m) + mm;
        let d1 = self.sum_ss / c + self.sum_pp / c - 2.0 * self.sum_sp / c;
        // Moments of the mean of n draws: (1/n)·single + (1−1/n)·mean-of-means.
        let w = 1.0 / n as f64;
        let (sbm, pbm): (Vec<f64>, Vec<f64>) =
            (sb.iter().zip(m).map(|(a, b)| a - b).collect(), pb.iter().zip(m).map(|(a, b)| a - b).collect());
        let a = w * ss1 + (1.0 - w) * norm2(&sbm);
        let p = w * pp1 + (1.0 - w) * norm2(&pbm);
        let cr = w * sp1 + (1.0 - w) * dot(&sbm, &pbm);
        let diff: Vec<f64> = sb.iter().zip(&pb).map(|(a, b)| a - b).collect();
        let d = (w * d1 + (1.0 - w) * norm2(&diff)).max(0.0);
        let num = a - cr;
        Ok(project(num, d, a.abs() + p.abs()))
    }
}

fn project(num: f64, den: f64, scale: f64) -> LambdaEstimate {
    if den <= DEGENERATE_TOL * scale || den == 0.0 {
        return LambdaEstimate { lambda: 0.0, numerator: num, denominator: den, degenerate: true };
    }
    LambdaEstimate { lambda: (num / den).clamp(0.0, 1.0), numerator: num, denominator: den, degenerate: false }
}

/// The closed-form optimal mixing weight from aligned sample lists.
pub fn lambda_star(p: &[Vec<f64>], s: &[Vec<f64>], reference: &[f64], n: usize) -> Result<LambdaEstimate> {
    if p.len() != s.len() || p.is_empty() {
        bail!(Contract, "p and s sample lists must be aligned and non-empty");
    }
    let dim = reference.len();
    if p.iter().chain(s).any(|v| v.len() != dim) {
        bail!(Contract, "sample dimension does not match the reference mean");
    }
    let mut acc = SplitMoments::new(dim);
    for (a, b) in p.iter().zip(s) {
        acc.push(a, b);
    }
    acc.lambda_star(reference, n)
}

/// Plug-in mixed-estimator MSE at `λ`, the objective `lambda_star` minimizes.
pub fn mixed_mse(p: &[Vec<f64>], s: &[Vec<f64>], reference: &[f64], n: usize, lambda: f64) -> f64 {
    let mixed: Vec<Vec<f64>> = p.iter().zip(s).map(|(a, b)| crate::linalg::mix(lambda, a, b)).collect();
    let c = mixed.len() as f64;
    let single: f64 = mixed.iter().map(|g| crate::linalg::dist2(g, reference)).sum::<f64>() / c;
    let mbar = crate::linalg::mean_vec(&mixed);
    let w = 1.0 / n as f64;
    w * single + (1.0 - w) * crate::linalg::dist2(&mbar, reference)
}

/// One momentum step of the online mixing weight. The batch mean of `p`
/// stands in for the unknown true mean and the batch size is the effective
/// sample count.
pub fn adaptive_lambda_update(
    batch_p: &[Vec<f64>],
    batch_s: &[Vec<f64>],
    prior: f64,
    mu: f64,
    normalize: bool,
) -> Result<f64> {
    if batch_p.len() != batch_s.len() {
        bail!(Contract, "p and s batches must be aligned");
    }
    if batch_p.len() < 2 {
        bail!(Statistics, "adaptive update needs a batch of at least 2");
    }
    let mut acc = SplitMoments::new(batch_p[0].len());
    for (p, s) in batch_p.iter().zip(batch_s) {
        if normalize {
            acc.push_normalized(p, s);
        } else {
            acc.push(p, s);
        }
    }
    Ok(momentum_step(&acc, prior, mu))
}

pub fn momentum_step(acc: &SplitMoments, prior: f64, mu: f64) -> f64 {
    let batch = acc.lambda_star(&acc.mean_p(), acc.count).map(|e| e.lambda).unwrap_or(prior);
    if mu == 1.0 {
        prior
    } else if mu == 0.0 {
        batch
    } else {
        (mu * prior + (1.0 - mu) * batch).clamp(0.0, 1.0)
    }
}
