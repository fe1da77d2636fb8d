use super::record::{config_hash, lambda_summary, BatchReducer, RunResult, RunRow};
use super::{reinforce_feedback_step, sample_action, Adam, DenseMlp, LambdaConfig, Method};
use crate::envs::{BanditEnv, Dataset};
use crate::error::{bail, Result};
use crate::estimation::momentum_step;
use crate::linalg::softmax;
use crate::rng::{derive, seeded, stream};
use crate::sparsenet::{FeedforwardNet, SparseNetConfig};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const TAG_BATCH: u64 = 1;
const TAG_ACTION: u64 = 2;
const TAG_REWARD: u64 = 3;
const TAG_EVAL: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditConfig {
    pub method: Method,
    pub seed: u64,
    pub steps: usize,
    pub batch: usize,
    pub eval_batch: usize,
    pub eval_every: usize,
    pub p_flip: f64,
    pub layers: usize,
    pub width: usize,
    pub neuron_dim: usize,
    pub parents: usize,
    pub slots: usize,
    pub lr_sgprop: f64,
    pub lr_backprop: f64,
    pub lr_predictor: f64,
    pub mlp_layers: usize,
    /// Hidden width of the dense baseline; `None` matches the SparseNet
    /// policy parameter count.
    pub mlp_width: Option<usize>,
    pub lr_dense: f64,
    pub lambda: LambdaConfig,
}

impl Default for BanditConfig {
    fn default() -> Self {
        BanditConfig {
            method: Method::SparsenetSgprop,
            seed: 0,
            steps: 1500,
            batch: 64,
            eval_batch: 4000,
            eval_every: 10,
            p_flip: 0.4,
            layers: 5,
            width: 200,
            neuron_dim: 10,
            parents: 5,
            slots: 5,
            lr_sgprop: 0.005,
            lr_backprop: 0.001,
            lr_predictor: 0.005,
            mlp_layers: 5,
            mlp_width: None,
            lr_dense: 2e-5,
            lambda: LambdaConfig::default(),
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch < 2 || self.eval_batch == 0 || self.eval_every == 0 {
            bail!(Configuration, "steps, eval_batch and eval_every must be positive and batch >= 2");
        }
        if !(0.0..=1.0).contains(&self.p_flip) {
            bail!(Configuration, "p_flip must be in [0,1]");
        }
        for (k, v) in [
            ("lr_sgprop", self.lr_sgprop),
            ("lr_backprop", self.lr_backprop),
            ("lr_predictor", self.lr_predictor),
            ("lr_dense", self.lr_dense),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bail!(Configuration, "{k} must be a non-negative number");
            }
        }
        self.lambda.validate()
    }

    pub fn net_config(&self, data: &Dataset) -> SparseNetConfig {
        SparseNetConfig {
            width: self.width,
            neuron_dim: self.neuron_dim,
            slots: self.slots,
            parents: self.parents,
            layers: self.layers,
            input_neurons: 0,
            embed_dim: 0,
            input_dim: data.feature_dim(),
            actions: data.classes,
            seed: derive(self.seed, 0xB0),
        }
    }
}

enum Policy {
    Sparse(FeedforwardNet),
    Dense(DenseMlp),
}

impl Policy {
    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Policy::Sparse(n) => n.forward(x)?.logits,
            Policy::Dense(m) => m.logits(&m.forward(x)).to_vec(),
        })
    }

    fn params(&self) -> Vec<f64> {
        match self {
            Policy::Sparse(n) => n.params_flat(),
            Policy::Dense(m) => m.params_flat(),
        }
    }
}

/// Expected noiseless reward `mean π(label | x)` over a fresh eval sample.
fn evaluate(policy: &Policy, data: &Dataset, n: usize, seed: u64, step: usize) -> Result<f64> {
    let mut rng = stream(seed, step as u64, TAG_EVAL);
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..data.len())).collect();
    let probs: Vec<f64> = idx
        .par_iter()
        .map(|&i| policy.logits(&data.contexts[i]).map(|z| softmax(&z)[data.labels[i]]))
        .collect::<Result<_>>()?;
    Ok(probs.iter().sum::<f64>() / n as f64)
}

pub fn run_bandit_experiment(cfg: &BanditConfig, data: &Dataset) -> Result<RunResult> {
    cfg.validate()?;
    let env = BanditEnv::new(data.clone(), cfg.p_flip)?;
    let hash = config_hash(cfg);
    let net_cfg = cfg.net_config(data);
    let mut policy = match cfg.method {
        Method::DenseMlp => {
            let width = match cfg.mlp_width {
                Some(w) => w,
                None => {
                    let target = FeedforwardNet::new(net_cfg.clone())?.params_flat().len();
                    DenseMlp::matching_width(data.feature_dim(), cfg.mlp_layers, data.classes, target)
                }
            };
            let mut rng = seeded(derive(cfg.seed, 0xD0));
            Policy::Dense(DenseMlp::new(data.feature_dim(), width, cfg.mlp_layers, data.classes, &mut rng))
        }
        _ => Policy::Sparse(FeedforwardNet::new(net_cfg)?),
    };
    let mixed = cfg.method == Method::SparsenetSgprop;
    if let Policy::Sparse(n) = &mut policy {
        n.neurons_mut().for_each(|x| x.lambda = cfg.lambda.init);
        let last = cfg.layers - 1;
        for x in n.layers[last].iter_mut() {
            x.lambda = 1.0;
        }
    }
    let lr = match cfg.method {
        Method::SparsenetSgprop => cfg.lr_sgprop,
        Method::SparsenetBackprop => cfg.lr_backprop,
        Method::DenseMlp => cfg.lr_dense,
    };
    let mut opt = Adam::new(policy.params().len(), lr);
    let mut pred_opt = match &policy {
        Policy::Sparse(n) if mixed => Some(Adam::new(n.layers.iter().flatten().map(|x| x.pred.len()).sum(), cfg.lr_predictor)),
        _ => None,
    };

    let mut rows = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let metric = if step % cfg.eval_every == 0 || step + 1 == cfg.steps {
            Some(evaluate(&policy, data, cfg.eval_batch, cfg.seed, step)?)
        } else {
            None
        };
        let mut brng = stream(cfg.seed, step as u64, TAG_BATCH);
        let idx: Vec<usize> = (0..cfg.batch).map(|_| brng.random_range(0..data.len())).collect();
        let sample = |b: usize, logits: &[f64]| -> Result<(usize, Vec<f64>)> {
            let key = (step * cfg.batch + b) as u64;
            let pi = softmax(logits);
            let a = sample_action(&pi, stream(cfg.seed, key, TAG_ACTION).random());
            let r = env.step(idx[b], a, &mut stream(cfg.seed, key, TAG_REWARD))?;
            Ok((a, reinforce_feedback_step(logits, a, r, 0.0)))
        };
        let (tr_bp, tr_mix);
        match &mut policy {
            Policy::Sparse(net) => {
                let outs: Vec<_> = (0..cfg.batch)
                    .into_par_iter()
                    .map(|b| {
                        let tr = net.forward(&data.contexts[idx[b]])?;
                        let (_, f) = sample(b, &tr.logits)?;
                        Ok(net.backward(&tr, &f, mixed))
                    })
                    .collect::<Result<_>>()?;
                let mut red = BatchReducer::new(cfg.lambda.normalize);
                for o in outs {
                    red.push(o);
                }
                (tr_bp, tr_mix) = red.trace_covs();
                let mut g = red.grads.take().expect("non-empty batch");
                g.scale(1.0 / cfg.batch as f64);
                let mut p = net.params_flat();
                opt.ascend(&mut p, &g.flat())?;
                net.set_params_flat(&p)?;
                if let Some(po) = pred_opt.as_mut() {
                    let inv = 1.0 / red.pred_records.max(1) as f64;
                    let grads: Vec<f64> = red.pred.iter().flatten().map(|v| v * inv).collect();
                    let mut pp: Vec<f64> = net.layers.iter().flatten().flat_map(|x| x.pred.iter().copied()).collect();
                    po.step(&mut pp, &grads)?;
                    let mut off = 0;
                    for x in net.neurons_mut() {
                        let n = x.pred.len();
                        x.pred.copy_from_slice(&pp[off..off + n]);
                        off += n;
                    }
                    if cfg.lambda.adaptive {
                        let last = cfg.layers - 1;
                        let w = cfg.width;
                        for (k, x) in net.neurons_mut().enumerate() {
                            if k / w < last {
                                x.lambda = momentum_step(&red.split[k], x.lambda, cfg.lambda.momentum);
                            }
                        }
                    }
                }
            }
            Policy::Dense(mlp) => {
                let outs: Vec<Vec<Vec<f64>>> = (0..cfg.batch)
                    .into_par_iter()
                    .map(|b| {
                        let tr = mlp.forward(&data.contexts[idx[b]]);
                        let (_, f) = sample(b, mlp.logits(&tr))?;
                        Ok(mlp.backward(&tr, &f))
                    })
                    .collect::<Result<_>>()?;
                let mut red = BatchReducer::new(false);
                for o in outs {
                    red.push(crate::sparsenet::MixedGrads {
                        grads: crate::sparsenet::NetGrads { neurons: o, ..Default::default() },
                        ..Default::default()
                    });
                }
                (tr_bp, tr_mix) = red.trace_covs();
                let mut g = red.grads.take().expect("non-empty batch");
                g.scale(1.0 / cfg.batch as f64);
                let mut p = mlp.params_flat();
                opt.ascend(&mut p, &g.flat())?;
                mlp.set_params_flat(&p);
            }
        }
        let lambdas: Vec<f64> = match &policy {
            Policy::Sparse(n) => n.layers[..cfg.layers - 1].iter().flatten().map(|x| x.lambda).collect(),
            Policy::Dense(_) => Vec::new(),
        };
        let (lambda_mean, lambda_min, lambda_max) = lambda_summary(&lambdas);
        rows.push(RunRow {
            step,
            samples_seen: (step + 1) * cfg.batch,
            metric,
            lambda_mean,
            lambda_min,
            lambda_max,
            tr_cov_backprop: tr_bp,
            tr_cov_mixed: tr_mix,
            seed: cfg.seed,
            config_hash: hash.clone(),
        });
    }
    Ok(RunResult { rows, final_params: policy.params(), ..Default::default() })
}
