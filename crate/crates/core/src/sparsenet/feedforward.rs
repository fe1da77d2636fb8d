use super::{head_logits, head_vjp, sample_parents, MixedGrads, NetGrads, SparseNetConfig, SparseNeuron};
use crate::error::{bail, Result};
use crate::linalg::{add_into, mix};
use crate::rng::{derive, normal, seeded};
use crate::slot::SlotCache;
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Residual stack: layer 0 reads fixed raw-input coordinates,
/// `h_ℓ,i = tanh(h̄_ℓ,i) + h_{ℓ−1,i}` afterwards, logits from action keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardNet {
    pub config: SparseNetConfig,
    pub layers: Vec<Vec<SparseNeuron>>,
    /// Raw-input coordinates read by each first-layer neuron.
    pub input_coords: Vec<Vec<usize>>,
    /// Action keys, `actions × (W·q)`.
    pub head: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfTrace {
    pub u: Vec<Vec<Vec<f64>>>,
    pub cache: Vec<Vec<SlotCache>>,
    pub h: Vec<Vec<Vec<f64>>>,
    pub logits: Vec<f64>,
}

impl FfTrace {
    pub fn alpha(&self, layer: usize, i: usize) -> &[f64] {
        &self.cache[layer][i].alpha
    }
}

impl FeedforwardNet {
    pub fn new(config: SparseNetConfig) -> Result<Self> {
        config.validate(false)?;
        let (w, q, np) = (config.width, config.neuron_dim, config.parents);
        let mut rng = seeded(derive(config.seed, 0xFF));
        let d = q * np;
        let mut input_coords = Vec::with_capacity(w);
        for _ in 0..w {
            let c: Vec<usize> = if d <= config.input_dim {
                sample(&mut rng, config.input_dim, d).into_vec()
            } else {
                (0..d).map(|_| rng.random_range(0..config.input_dim)).collect()
            };
            input_coords.push(c);
        }
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let layer = (0..w)
                .map(|i| {
                    let parents = if l == 0 { Vec::new() } else { sample_parents(w, np, i, &mut rng) };
                    SparseNeuron::init(config.slots, d, q, parents, &mut rng)
                })
                .collect();
            layers.push(layer);
        }
        let head = (0..config.actions * w * q).map(|_| normal(&mut rng)).collect();
        Ok(FeedforwardNet { config, layers, input_coords, head })
    }

    pub fn num_neurons(&self) -> usize {
        self.layers.len() * self.config.width
    }

    pub fn neuron(&self, flat: usize) -> &SparseNeuron {
        &self.layers[flat / self.config.width][flat % self.config.width]
    }

    pub fn neurons_mut(&mut self) -> impl Iterator<Item = &mut SparseNeuron> {
        self.layers.iter_mut().flatten()
    }

    pub fn forward(&self, x: &[f64]) -> Result<FfTrace> {
        if let Some(&bad) = self.input_coords.iter().flatten().find(|&&c| c >= x.len()) {
            bail!(Input, "input of length {} too short for coordinate {bad}", x.len());
        }
        let q = self.config.neuron_dim;
        let mut tr = FfTrace { u: Vec::new(), cache: Vec::new(), h: Vec::new(), logits: Vec::new() };
        for (l, layer) in self.layers.iter().enumerate() {
            let mut us = Vec::with_capacity(layer.len());
            let mut cs = Vec::with_capacity(layer.len());
            let mut hs = Vec::with_capacity(layer.len());
            for (i, n) in layer.iter().enumerate() {
                let u: Vec<f64> = if l == 0 {
                    self.input_coords[i].iter().map(|&c| x[c]).collect()
                } else {
                    n.parents.iter().flat_map(|&p| tr.h[l - 1][p].iter().copied()).collect()
                };
                let c = n.forward(&u);
                let h = if l == 0 {
                    c.out.clone()
                } else {
                    (0..q).map(|r| c.out[r].tanh() + tr.h[l - 1][i][r]).collect()
                };
                us.push(u);
                cs.push(c);
                hs.push(h);
            }
            tr.u.push(us);
            tr.cache.push(cs);
            tr.h.push(hs);
        }
        let flat: Vec<f64> = tr.h.last().unwrap().iter().flatten().copied().collect();
        tr.logits = head_logits(&self.head, &flat, self.config.actions);
        Ok(tr)
    }

    /// Backward pass for logit feedback `f`. With `mixed = false` this is
    /// plain backprop; otherwise each neuron mixes its backpropagated and
    /// synthetic feedback with its own `λ`, and the `(p̃, s̃)` split and
    /// predictor gradients are returned. Logit edges are never mixed.
    pub fn backward(&self, tr: &FfTrace, f: &[f64], mixed: bool) -> MixedGrads {
        let (w, q) = (self.config.width, self.config.neuron_dim);
        let n_l = self.layers.len();
        let mut out = MixedGrads {
            grads: NetGrads {
                neurons: vec![Vec::new(); self.num_neurons()],
                head: vec![0.0; self.head.len()],
                embed: Vec::new(),
            },
            ..Default::default()
        };
        if mixed {
            out.p = vec![Vec::new(); self.num_neurons()];
            out.s = vec![Vec::new(); self.num_neurons()];
            out.pred = self.layers.iter().flatten().map(|n| vec![0.0; n.pred.len()]).collect();
        }
        let flat: Vec<f64> = tr.h[n_l - 1].iter().flatten().copied().collect();
        let gh = head_vjp(&self.head, &flat, f, &mut out.grads.head);
        let mut p_cur: Vec<Vec<f64>> = gh.chunks(q).map(<[f64]>::to_vec).collect();
        let mut s_cur = if mixed { p_cur.clone() } else { Vec::new() };

        for l in (0..n_l).rev() {
            let mut p_prev = vec![vec![0.0; q]; if l > 0 { w } else { 0 }];
            let mut s_prev = if mixed { p_prev.clone() } else { Vec::new() };
            for (i, n) in self.layers[l].iter().enumerate() {
                let k = l * w + i;
                let (u, c) = (&tr.u[l][i], &tr.cache[l][i]);
                let through = |g: &[f64]| -> Vec<f64> {
                    if l == 0 {
                        g.to_vec()
                    } else {
                        g.iter().zip(&c.out).map(|(g, z)| g * (1.0 - z.tanh().powi(2))).collect()
                    }
                };
                let lam = n.lambda;
                let (g_mixed, gu) = if mixed {
                    let mut pt = vec![0.0; n.theta.len()];
                    let gu_p = n.vjp(u, c, &through(&p_cur[i]), Some(&mut pt));
                    let (gu_s, st) = if l + 1 == n_l {
                        // Only logit edges: both components coincide.
                        (gu_p.clone(), pt.clone())
                    } else {
                        let mut st = vec![0.0; n.theta.len()];
                        (n.vjp(u, c, &through(&s_cur[i]), Some(&mut st)), st)
                    };
                    out.grads.neurons[k] = mix(lam, &pt, &st);
                    out.p[k] = pt;
                    out.s[k] = st;
                    (mix(lam, &p_cur[i], &s_cur[i]), mix(lam, &gu_p, &gu_s))
                } else {
                    let mut pt = vec![0.0; n.theta.len()];
                    let gu = n.vjp(u, c, &through(&p_cur[i]), Some(&mut pt));
                    out.grads.neurons[k] = pt;
                    (p_cur[i].clone(), gu)
                };
                if l == 0 {
                    continue;
                }
                for (b, &par) in n.parents.iter().enumerate() {
                    add_into(&gu[b * q..(b + 1) * q], &mut p_prev[par]);
                }
                add_into(&g_mixed, &mut p_prev[i]);
                if mixed {
                    let hp = n.predict_with(u, &c.alpha);
                    let gu_h = n.vjp(u, c, &through(&hp), None);
                    for (b, &par) in n.parents.iter().enumerate() {
                        add_into(&gu_h[b * q..(b + 1) * q], &mut s_prev[par]);
                    }
                    add_into(&hp, &mut s_prev[i]);
                    let err: Vec<f64> = hp.iter().zip(&g_mixed).map(|(a, b)| a - b).collect();
                    n.predictor_grad(u, &c.alpha, &err, &mut out.pred[k]);
                }
            }
            if l > 0 {
                if mixed {
                    // Mixed feedback for layer l−1 is formed when that layer is visited.
                    out.pred_records += w;
                    s_cur = s_prev;
                }
                p_cur = p_prev;
            }
        }
        out
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers.iter().flatten().flat_map(|n| n.theta.iter()).chain(&self.head).copied().collect()
    }

    pub fn set_params_flat(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.params_flat().len() {
            bail!(Contract, "expected {} parameters, got {}", self.params_flat().len(), v.len());
        }
        let mut off = 0;
        for n in self.layers.iter_mut().flatten() {
            let len = n.theta.len();
            n.theta.copy_from_slice(&v[off..off + len]);
            off += len;
        }
        self.head.copy_from_slice(&v[off..]);
        Ok(())
    }
}
