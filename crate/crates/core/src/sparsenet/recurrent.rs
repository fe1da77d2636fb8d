use super::{
    head_logits, head_vjp, lambda_schedule_bptt, sample_parents, MixedGrads, NetGrads, SparseNetConfig, SparseNeuron,
};
use crate::error::{bail, Result};
use crate::linalg::{add_into, axpy, mix};
use crate::rng::{derive, normal, seeded};
use crate::slot::SlotCache;
use serde::{Deserialize, Serialize};

/// Recurrent SparseNet: `h_t,i = h̄_i([h_{t−1,p}]_{p∈pa(i)} ‖ e_t)`, where only
/// the first `input_neurons` neurons read the embedding `e_t = W_e o_t + b_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentNet {
    pub config: SparseNetConfig,
    pub neurons: Vec<SparseNeuron>,
    /// `children[i]`: neurons that read `i` at the next step.
    pub children: Vec<Vec<usize>>,
    pub head: Vec<f64>,
    /// Embedding weights `embed_dim × input_dim`, then biases.
    pub embed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub obs: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub cache: Vec<SlotCache>,
    pub h: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BpttTrace {
    pub steps: Vec<StepCache>,
    /// Valid-step mask; valid steps form a prefix.
    pub mask: Vec<bool>,
}

impl BpttTrace {
    pub fn valid_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }
}

impl RecurrentNet {
    pub fn new(config: SparseNetConfig) -> Result<Self> {
        config.validate(true)?;
        let (w, q, np, e) = (config.width, config.neuron_dim, config.parents, config.embed_dim);
        let mut rng = seeded(derive(config.seed, 0x5EC));
        let mut neurons = Vec::with_capacity(w);
        for i in 0..w {
            let parents = sample_parents(w, np, i, &mut rng);
            let d = q * np + if i < config.input_neurons { e } else { 0 };
            neurons.push(SparseNeuron::init(config.slots, d, q, parents, &mut rng));
        }
        let mut children = vec![Vec::new(); w];
        for (j, n) in neurons.iter().enumerate() {
            for &p in &n.parents {
                children[p].push(j);
            }
        }
        let head = (0..config.actions * w * q).map(|_| normal(&mut rng)).collect();
        let sd = 1.0 / (config.input_dim as f64).sqrt();
        let mut embed: Vec<f64> = (0..e * config.input_dim).map(|_| sd * normal(&mut rng)).collect();
        embed.extend(std::iter::repeat_n(0.0, e));
        Ok(RecurrentNet { config, neurons, children, head, embed })
    }

    pub fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.config.width * self.config.neuron_dim]
    }

    fn embed(&self, obs: &[f64]) -> Vec<f64> {
        let (e, o) = (self.config.embed_dim, self.config.input_dim);
        (0..e).map(|r| crate::linalg::dot(&self.embed[r * o..(r + 1) * o], obs) + self.embed[e * o + r]).collect()
    }

    /// One transition from flat state `h_prev`.
    pub fn step(&self, h_prev: &[f64], obs: &[f64]) -> Result<StepCache> {
        if obs.len() != self.config.input_dim {
            bail!(Input, "observation length {} != {}", obs.len(), self.config.input_dim);
        }
        let q = self.config.neuron_dim;
        let e = self.embed(obs);
        let mut u = Vec::with_capacity(self.neurons.len());
        let mut cache = Vec::with_capacity(self.neurons.len());
        let mut h = Vec::with_capacity(h_prev.len());
        for (i, n) in self.neurons.iter().enumerate() {
            let mut ui: Vec<f64> = n.parents.iter().flat_map(|&p| h_prev[p * q..(p + 1) * q].iter().copied()).collect();
            if i < self.config.input_neurons {
                ui.extend_from_slice(&e);
            }
            let c = n.forward(&ui);
            h.extend_from_slice(&c.out);
            u.push(ui);
            cache.push(c);
        }
        let logits = head_logits(&self.head, &h, self.config.actions);
        Ok(StepCache { obs: obs.to_vec(), u, cache, h, logits })
    }

    /// Unrolls from the zero state over the valid prefix of `mask`.
    pub fn forward_sequence(&self, obs: &[Vec<f64>], mask: &[bool]) -> Result<BpttTrace> {
        if obs.len() != mask.len() {
            bail!(Input, "{} observations but {} mask entries", obs.len(), mask.len());
        }
        let valid = mask.iter().take_while(|&&m| m).count();
        if mask[valid..].iter().any(|&m| m) {
            bail!(Input, "valid steps must form a prefix of the mask");
        }
        let mut h = self.zero_state();
        let mut steps = Vec::with_capacity(valid);
        for o in &obs[..valid] {
            let s = self.step(&h, o)?;
            h.clone_from(&s.h);
            steps.push(s);
        }
        Ok(BpttTrace { steps, mask: mask.to_vec() })
    }

    /// BPTT for per-step logit feedback. `lambdas = None` is plain BPTT.
    /// Otherwise neuron `i` at step `t` mixes with the scheduled weight
    /// `θ_t,i` (base `λ_i` at the last valid step, grown backwards by `rho`).
    pub fn mixed_backward(
        &self,
        tr: &BpttTrace,
        feedback: &[Vec<f64>],
        lambdas: Option<&[f64]>,
        rho: f64,
        record_schedule: bool,
    ) -> Result<MixedGrads> {
        let (w, q) = (self.config.width, self.config.neuron_dim);
        let t_n = tr.valid_len();
        if tr.steps.len() != t_n || feedback.len() < t_n {
            bail!(Input, "trace has {} steps, {} valid, {} feedback vectors", tr.steps.len(), t_n, feedback.len());
        }
        if let Some(l) = lambdas {
            if l.len() != w || l.iter().any(|v| !(0.0..=1.0).contains(v)) {
                bail!(Contract, "need one mixing weight in [0,1] per neuron");
            }
        }
        if !(rho >= 0.0) {
            bail!(Contract, "schedule rate must be >= 0");
        }
        let mixed = lambdas.is_some();
        let mut out = MixedGrads {
            grads: NetGrads {
                neurons: self.neurons.iter().map(|n| vec![0.0; n.theta.len()]).collect(),
                head: vec![0.0; self.head.len()],
                embed: vec![0.0; self.embed.len()],
            },
            ..Default::default()
        };
        if mixed {
            out.p = out.grads.neurons.clone();
            out.s = out.grads.neurons.clone();
            out.pred = self.neurons.iter().map(|n| vec![0.0; n.pred.len()]).collect();
        }
        let mut theta = lambdas.map(<[f64]>::to_vec).unwrap_or_default();
        let mut schedule = Vec::new();
        let (e_n, o_n) = (self.config.embed_dim, self.config.input_dim);
        let mut next_p = vec![0.0; w * q];
        let mut next_s = vec![0.0; w * q];
        for t in (0..t_n).rev() {
            let st = &tr.steps[t];
            if mixed && t + 1 < t_n {
                theta = lambda_schedule_bptt(&theta, &self.children, rho);
            }
            if record_schedule && mixed {
                schedule.push(theta.clone());
            }
            let head = head_vjp(&self.head, &st.h, &feedback[t], &mut out.grads.head);
            let mut p_all = head.clone();
            add_into(&next_p, &mut p_all);
            let s_all = if mixed {
                let mut s = head;
                add_into(&next_s, &mut s);
                s
            } else {
                Vec::new()
            };
            next_p.iter_mut().for_each(|v| *v = 0.0);
            next_s.iter_mut().for_each(|v| *v = 0.0);
            let mut g_embed = vec![0.0; e_n];
            for (i, n) in self.neurons.iter().enumerate() {
                let (u, c) = (&st.u[i], &st.cache[i]);
                let p_i = &p_all[i * q..(i + 1) * q];
                let (g_i, gu) = if mixed {
                    let s_i = &s_all[i * q..(i + 1) * q];
                    let (mut pt, mut sg) = (vec![0.0; n.theta.len()], vec![0.0; n.theta.len()]);
                    let gu_p = n.vjp(u, c, p_i, Some(&mut pt));
                    let gu_s = n.vjp(u, c, s_i, Some(&mut sg));
                    let th = theta[i];
                    add_into(&mix(th, &pt, &sg), &mut out.grads.neurons[i]);
                    add_into(&pt, &mut out.p[i]);
                    add_into(&sg, &mut out.s[i]);
                    (mix(th, p_i, s_i), mix(th, &gu_p, &gu_s))
                } else {
                    let mut pt = vec![0.0; n.theta.len()];
                    let gu = n.vjp(u, c, p_i, Some(&mut pt));
                    add_into(&pt, &mut out.grads.neurons[i]);
                    (p_i.to_vec(), gu)
                };
                for (b, &par) in n.parents.iter().enumerate() {
                    add_into(&gu[b * q..(b + 1) * q], &mut next_p[par * q..(par + 1) * q]);
                }
                if i < self.config.input_neurons {
                    add_into(&gu[n.parents.len() * q..], &mut g_embed);
                }
                if mixed && t > 0 {
                    let hp = n.predict_with(u, &c.alpha);
                    let gu_h = n.vjp(u, c, &hp, None);
                    for (b, &par) in n.parents.iter().enumerate() {
                        add_into(&gu_h[b * q..(b + 1) * q], &mut next_s[par * q..(par + 1) * q]);
                    }
                    let err: Vec<f64> = hp.iter().zip(&g_i).map(|(a, b)| a - b).collect();
                    n.predictor_grad(u, &c.alpha, &err, &mut out.pred[i]);
                }
            }
            for r in 0..e_n {
                axpy(g_embed[r], &st.obs, &mut out.grads.embed[r * o_n..(r + 1) * o_n]);
                out.grads.embed[e_n * o_n + r] += g_embed[r];
            }
            if mixed && t > 0 {
                out.pred_records += w;
            }
        }
        if record_schedule && mixed {
            schedule.reverse();
            out.schedule = Some(schedule);
        }
        Ok(out)
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.neurons.iter().flat_map(|n| n.theta.iter()).chain(&self.head).chain(&self.embed).copied().collect()
    }

    pub fn set_params_flat(&mut self, v: &[f64]) -> Result<()> {
        let total = self.params_flat().len();
        if v.len() != total {
            bail!(Contract, "expected {total} parameters, got {}", v.len());
        }
        let mut off = 0;
        for n in &mut self.neurons {
            let len = n.theta.len();
            n.theta.copy_from_slice(&v[off..off + len]);
            off += len;
        }
        let hl = self.head.len();
        self.head.copy_from_slice(&v[off..off + hl]);
        self.embed.copy_from_slice(&v[off + hl..]);
        Ok(())
    }
}
