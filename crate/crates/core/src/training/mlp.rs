use crate::linalg::{dot, axpy};
use crate::rng::{normal, Rng};
use serde::{Deserialize, Serialize};

/// Fully connected tanh network with a linear logit layer; the dense baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMlp {
    pub sizes: Vec<usize>,
    /// Per layer: weights `out × in` row-major, then biases.
    pub params: Vec<Vec<f64>>,
}

pub struct MlpTrace {
    pub acts: Vec<Vec<f64>>,
}

impl DenseMlp {
    pub fn new(input: usize, hidden: usize, layers: usize, outputs: usize, rng: &mut Rng) -> Self {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(hidden, layers));
        sizes.push(outputs);
        let params = sizes
            .windows(2)
            .map(|w| {
                let sd = 1.0 / (w[0] as f64).sqrt();
                let mut p: Vec<f64> = (0..w[0] * w[1]).map(|_| sd * normal(rng)).collect();
                p.extend(std::iter::repeat_n(0.0, w[1]));
                p
            })
            .collect();
        DenseMlp { sizes, params }
    }

    pub fn param_count(input: usize, hidden: usize, layers: usize, outputs: usize) -> usize {
        let mut n = (input + 1) * hidden + (hidden + 1) * outputs;
        n += layers.saturating_sub(1) * (hidden + 1) * hidden;
        n
    }

    /// Smallest hidden width whose parameter count reaches `target`.
    pub fn matching_width(input: usize, layers: usize, outputs: usize, target: usize) -> usize {
        let mut h = 1;
        while Self::param_count(input, h, layers, outputs) < target {
            h += 1;
        }
        h
    }

    pub fn forward(&self, x: &[f64]) -> MlpTrace {
        let mut acts = vec![x.to_vec()];
        let n_l = self.params.len();
        for (l, p) in self.params.iter().enumerate() {
            let (i_n, o_n) = (self.sizes[l], self.sizes[l + 1]);
            let prev = &acts[l];
            let z: Vec<f64> = (0..o_n)
                .map(|o| {
                    let v = dot(&p[o * i_n..(o + 1) * i_n], prev) + p[i_n * o_n + o];
                    if l + 1 < n_l {
                        v.tanh()
                    } else {
                        v
                    }
                })
                .collect();
            acts.push(z);
        }
        MlpTrace { acts }
    }

    pub fn logits<'a>(&self, tr: &'a MlpTrace) -> &'a [f64] {
        tr.acts.last().unwrap()
    }

    pub fn backward(&self, tr: &MlpTrace, f: &[f64]) -> Vec<Vec<f64>> {
        let n_l = self.params.len();
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut g = f.to_vec();
        for l in (0..n_l).rev() {
            let (i_n, o_n) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < n_l {
                for (gv, a) in g.iter_mut().zip(&tr.acts[l + 1]) {
                    *gv *= 1.0 - a * a;
                }
            }
            let p = &self.params[l];
            let mut g_in = vec![0.0; i_n];
            for o in 0..o_n {
                if g[o] == 0.0 {
                    continue;
                }
                axpy(g[o], &tr.acts[l], &mut grads[l][o * i_n..(o + 1) * i_n]);
                grads[l][i_n * o_n + o] += g[o];
                axpy(g[o], &p[o * i_n..(o + 1) * i_n], &mut g_in);
            }
            g = g_in;
        }
        grads
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.params.concat()
    }

    pub fn set_params_flat(&mut self, v: &[f64]) {
        let mut off = 0;
        for p in &mut self.params {
            let n = p.len();
            p.copy_from_slice(&v[off..off + n]);
            off += n;
        }
    }
}
