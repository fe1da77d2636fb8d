use crate::linalg::{axpy, dot};
use crate::slot::{param_len, SlotCache, SlotView};
use crate::rng::{normal, Rng};
use serde::{Deserialize, Serialize};

/// Slot-routed neuron with a co-located synthetic-gradient head.
///
/// `theta` holds keys, slot matrices and slot biases (see [`crate::slot`]);
/// `pred` holds the predictor's slot matrices `Ã` (`M×q×d`) then biases `b̃`
/// (`M×q`). The predictor reuses the policy's routing weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseNeuron {
    pub slots: usize,
    pub d: usize,
    pub q: usize,
    pub theta: Vec<f64>,
    pub pred: Vec<f64>,
    pub parents: Vec<usize>,
    pub lambda: f64,
}

impl SparseNeuron {
    /// Keys and slot matrices `N(0, 1/d)`, biases zero, predictor zero, λ = 1.
    pub fn init(slots: usize, d: usize, q: usize, parents: Vec<usize>, rng: &mut Rng) -> Self {
        let sd = 1.0 / (d as f64).sqrt();
        let mut theta = vec![0.0; param_len(slots, d, q)];
        for v in theta[..slots * d + slots * q * d].iter_mut() {
            *v = sd * normal(rng);
        }
        SparseNeuron { slots, d, q, theta, pred: vec![0.0; slots * q * d + slots * q], parents, lambda: 1.0 }
    }

    pub fn view(&self) -> SlotView<'_> {
        SlotView::from_flat(&self.theta, self.slots, self.d, self.q)
    }

    /// `(α, h̄)` with `α = softmax(Ku/√d)` and `h̄ = Σ α_s tanh(A_s u + b_s)`.
    pub fn forward(&self, u: &[f64]) -> SlotCache {
        self.view().forward(u)
    }

    /// `ĥ = Σ α_s (Ã_s u + b̃_s)` at given routing weights.
    pub fn predict_with(&self, u: &[f64], alpha: &[f64]) -> Vec<f64> {
        let (m_n, d, q) = (self.slots, self.d, self.q);
        let mut out = vec![0.0; q];
        for m in 0..m_n {
            if alpha[m] == 0.0 {
                continue;
            }
            for r in 0..q {
                let off = (m * q + r) * d;
                out[r] += alpha[m] * (dot(&self.pred[off..off + d], u) + self.pred[m_n * q * d + m * q + r]);
            }
        }
        out
    }

    pub fn predict_synthetic(&self, u: &[f64]) -> Vec<f64> {
        self.predict_with(u, &self.view().route(u))
    }

    /// Input cotangent for output cotangent `g`; parameter cotangents are
    /// accumulated into `grad` when given.
    pub fn vjp(&self, u: &[f64], cache: &SlotCache, g: &[f64], grad: Option<&mut [f64]>) -> Vec<f64> {
        self.view().vjp(u, cache, g, grad)
    }

    /// Accumulate the gradient of `½‖ĥ − target‖²` w.r.t. the predictor
    /// parameters, where `err = ĥ − target`. Routing keys are not touched.
    pub fn predictor_grad(&self, u: &[f64], alpha: &[f64], err: &[f64], grad: &mut [f64]) {
        let (m_n, d, q) = (self.slots, self.d, self.q);
        for m in 0..m_n {
            for r in 0..q {
                let w = alpha[m] * err[r];
                if w != 0.0 {
                    let off = (m * q + r) * d;
                    axpy(w, u, &mut grad[off..off + d]);
                    grad[m_n * q * d + m * q + r] += w;
                }
            }
        }
    }
}

/// Least-squares fit of a single neuron's predictor to `(u, target)` pairs,
/// one averaged gradient step of size `lr` (plain gradient descent).
pub fn train_predictor_step(neuron: &mut SparseNeuron, samples: &[(Vec<f64>, Vec<f64>)], lr: f64) {
    let mut grad = vec![0.0; neuron.pred.len()];
    for (u, t) in samples {
        let alpha = neuron.view().route(u);
        let h = neuron.predict_with(u, &alpha);
        let err: Vec<f64> = h.iter().zip(t).map(|(a, b)| a - b).collect();
        neuron.predictor_grad(u, &alpha, &err, &mut grad);
    }
    let inv = 1.0 / samples.len().max(1) as f64;
    for (p, g) in neuron.pred.iter_mut().zip(grad) {
        *p -= lr * g * inv;
    }
}
