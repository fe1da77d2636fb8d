//! Slot-routed map shared by the graph engine and the SparseNet neuron.
//!
//! Parameter layout for `M` slots, input dim `d`, output dim `q`:
//! keys `M×d`, slot matrices `M×q×d`, slot biases `M×q`, all row-major.

use crate::linalg::{axpy, dot};

pub fn param_len(slots: usize, d: usize, q: usize) -> usize {
    slots * d + slots * q * d + slots * q
}

#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub slots: usize,
    pub d: usize,
    pub q: usize,
    pub keys: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
}

impl<'a> SlotView<'a> {
    pub fn from_flat(params: &'a [f64], slots: usize, d: usize, q: usize) -> Self {
        let (keys, rest) = params.split_at(slots * d);
        let (a, b) = rest.split_at(slots * q * d);
        debug_assert_eq!(b.len(), slots * q);
        SlotView { slots, d, q, keys, a, b }
    }

    fn key(&self, m: usize) -> &[f64] {
        &self.keys[m * self.d..(m + 1) * self.d]
    }

    fn a_row(&self, m: usize, r: usize) -> &[f64] {
        let off = (m * self.q + r) * self.d;
        &self.a[off..off + self.d]
    }

    /// Softmax routing weights `α_m ∝ exp(⟨k_m, u⟩/√d)`.
    pub fn route(&self, u: &[f64]) -> Vec<f64> {
        let s = 1.0 / (self.d as f64).sqrt();
        let logits: Vec<f64> = (0..self.slots).map(|m| dot(self.key(m), u) * s).collect();
        crate::linalg::softmax(&logits)
    }

    pub fn forward(&self, u: &[f64]) -> SlotCache {
        let alpha = self.route(u);
        let mut y = Vec::with_capacity(self.slots * self.q);
        for m in 0..self.slots {
            for r in 0..self.q {
                y.push((dot(self.a_row(m, r), u) + self.b[m * self.q + r]).tanh());
            }
        }
        let mut out = vec![0.0; self.q];
        for m in 0..self.slots {
            axpy(alpha[m], &y[m * self.q..(m + 1) * self.q], &mut out);
        }
        SlotCache { alpha, y, out }
    }

    /// Vector-Jacobian product. Returns the input cotangent and accumulates
    /// parameter cotangents into `grad` (same layout as the flat params).
    pub fn vjp(&self, u: &[f64], cache: &SlotCache, g: &[f64], grad: Option<&mut [f64]>) -> Vec<f64> {
        let (m_n, d, q) = (self.slots, self.d, self.q);
        let inv = 1.0 / (d as f64).sqrt();
        let g_alpha: Vec<f64> = (0..m_n).map(|m| dot(g, &cache.y[m * q..(m + 1) * q])).collect();
        let avg: f64 = cache.alpha.iter().zip(&g_alpha).map(|(a, b)| a * b).sum();
        let g_logit: Vec<f64> = (0..m_n).map(|m| cache.alpha[m] * (g_alpha[m] - avg)).collect();

        let mut g_u = vec![0.0; d];
        let mut grad = grad;
        for m in 0..m_n {
            axpy(g_logit[m] * inv, self.key(m), &mut g_u);
            for r in 0..q {
                let y = cache.y[m * q + r];
                let gp = cache.alpha[m] * g[r] * (1.0 - y * y);
                if gp != 0.0 {
                    axpy(gp, self.a_row(m, r), &mut g_u);
                }
                if let Some(gr) = grad.as_deref_mut() {
                    let off = m_n * d + (m * q + r) * d;
                    axpy(gp, u, &mut gr[off..off + d]);
                    gr[m_n * d + m_n * q * d + m * q + r] += gp;
                }
            }
            if let Some(gr) = grad.as_deref_mut() {
                axpy(g_logit[m] * inv, u, &mut gr[m * d..(m + 1) * d]);
            }
        }
        g_u
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotCache {
    pub alpha: Vec<f64>,
    /// Slot outputs, `M×q`.
    pub y: Vec<f64>,
    pub out: Vec<f64>,
}
