use super::record::{config_hash, lambda_summary, BatchReducer, RunResult, RunRow};
use super::{discounted_returns, reinforce_feedback, sample_action, Adam, LambdaConfig, Method};
use crate::envs::{generate_maze, LabyrinthEnv, Maze, Variant, ACTIONS, OBS_DIM};
use crate::error::{bail, Result};
use crate::estimation::momentum_step;
use crate::linalg::softmax;
use crate::rng::{derive, stream};
use crate::sparsenet::{MixedGrads, RecurrentNet, SparseNetConfig, DEFAULT_RHO};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const TAG_MAZE: u64 = 1;
const TAG_ENV: u64 = 2;
const TAG_ACTION: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabyrinthConfig {
    pub method: Method,
    pub seed: u64,
    pub variant: Variant,
    pub maze_height: usize,
    pub maze_width: usize,
    /// Use every internal passage instead of a carved maze.
    pub open_maze: bool,
    /// Episode step cap; `None` uses the variant default.
    pub episode_cap: Option<usize>,
    pub show_visited: bool,
    pub batches: usize,
    pub n_envs: usize,
    pub width: usize,
    pub neuron_dim: usize,
    pub slots: usize,
    pub parents: usize,
    pub input_neurons: usize,
    pub embed_dim: usize,
    pub lr: f64,
    pub lr_predictor: f64,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub rho: f64,
    /// Subtract the batch-mean return at each step.
    pub mean_baseline: bool,
    pub lambda: LambdaConfig,
    /// Record the realized `θ[t][i]` table of each batch's first episode.
    pub record_schedule: bool,
    /// Stop once a batch's success rate exceeds this value.
    pub stop_at_success: Option<f64>,
}

impl Default for LabyrinthConfig {
    fn default() -> Self {
        LabyrinthConfig {
            method: Method::SparsenetSgprop,
            seed: 0,
            variant: Variant::Escape,
            maze_height: 6,
            maze_width: 6,
            open_maze: false,
            episode_cap: None,
            show_visited: true,
            batches: 300,
            n_envs: 20,
            width: 128,
            neuron_dim: 6,
            slots: 6,
            parents: 6,
            input_neurons: 16,
            embed_dim: 128,
            lr: 1e-3,
            lr_predictor: 1e-5,
            gamma: 0.95,
            entropy_coef: 0.01,
            rho: DEFAULT_RHO,
            mean_baseline: false,
            lambda: LambdaConfig::default(),
            record_schedule: false,
            stop_at_success: None,
        }
    }
}

impl LabyrinthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.method == Method::DenseMlp {
            bail!(Configuration, "the labyrinth has no dense baseline");
        }
        if self.maze_height < 2 || self.maze_width < 2 {
            bail!(Configuration, "maze dims must be >= 2");
        }
        if self.batches == 0 || self.n_envs == 0 || self.cap() == 0 {
            bail!(Configuration, "batches, n_envs and episode_cap must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            bail!(Configuration, "gamma must be in [0,1]");
        }
        for (k, v) in [("lr", self.lr), ("lr_predictor", self.lr_predictor), ("entropy_coef", self.entropy_coef), ("rho", self.rho)] {
            if !(v >= 0.0 && v.is_finite()) {
                bail!(Configuration, "{k} must be a non-negative number");
            }
        }
        self.lambda.validate()
    }

    pub fn cap(&self) -> usize {
        self.episode_cap.unwrap_or(self.variant.default_cap())
    }

    pub fn net_config(&self) -> SparseNetConfig {
        SparseNetConfig {
            width: self.width,
            neuron_dim: self.neuron_dim,
            slots: self.slots,
            parents: self.parents,
            layers: 1,
            input_neurons: self.input_neurons,
            embed_dim: self.embed_dim,
            input_dim: OBS_DIM,
            actions: ACTIONS,
            seed: derive(self.seed, 0x1AB),
        }
    }
}

/// One rolled-out episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub success: bool,
}

pub fn rollout(net: &RecurrentNet, mut env: LabyrinthEnv, seed: u64, key: u64) -> Result<Episode> {
    let mut arng = stream(seed, key, TAG_ACTION);
    let mut h = net.zero_state();
    let mut obs = env.observe();
    let mut ep = Episode { observations: Vec::new(), actions: Vec::new(), rewards: Vec::new(), success: false };
    loop {
        let st = net.step(&h, &obs)?;
        let a = sample_action(&softmax(&st.logits), arng.random());
        let (next, r, done) = env.step(a)?;
        ep.observations.push(std::mem::replace(&mut obs, next));
        ep.actions.push(a);
        ep.rewards.push(r);
        h = st.h;
        if done {
            break;
        }
    }
    ep.success = env.success;
    Ok(ep)
}

pub fn run_labyrinth_experiment(cfg: &LabyrinthConfig) -> Result<RunResult> {
    cfg.validate()?;
    let hash = config_hash(cfg);
    let mut net = RecurrentNet::new(cfg.net_config())?;
    net.neurons.iter_mut().for_each(|n| n.lambda = cfg.lambda.init);
    let mixed = cfg.method == Method::SparsenetSgprop;
    let mut opt = Adam::new(net.params_flat().len(), cfg.lr);
    let mut pred_opt = Adam::new(net.neurons.iter().map(|n| n.pred.len()).sum(), cfg.lr_predictor);
    let mut res = RunResult { children: net.children.clone(), ..Default::default() };

    for batch in 0..cfg.batches {
        let episodes: Vec<Episode> = (0..cfg.n_envs)
            .into_par_iter()
            .map(|e| {
                let key = (batch * cfg.n_envs + e) as u64;
                let maze = if cfg.open_maze {
                    Maze::open(cfg.maze_height, cfg.maze_width)
                } else {
                    generate_maze(cfg.maze_height, cfg.maze_width, &mut stream(cfg.seed, key, TAG_MAZE))?
                };
                let mut env = LabyrinthEnv::new(maze, cfg.variant, cfg.cap(), stream(cfg.seed, key, TAG_ENV));
                env.show_visited = cfg.show_visited;
                rollout(&net, env, cfg.seed, key)
            })
            .collect::<Result<_>>()?;
        let success = episodes.iter().filter(|e| e.success).count() as f64 / cfg.n_envs as f64;

        let returns: Vec<Vec<f64>> = episodes
            .iter()
            .map(|e| discounted_returns(&e.rewards, cfg.gamma, &vec![true; e.rewards.len()]))
            .collect::<Result<_>>()?;
        let baseline = if cfg.mean_baseline { step_means(&returns) } else { Vec::new() };
        let lambdas: Option<Vec<f64>> = mixed.then(|| net.neurons.iter().map(|n| n.lambda).collect());
        let outs: Vec<MixedGrads> = episodes
            .par_iter()
            .zip(&returns)
            .enumerate()
            .map(|(e, (ep, ret))| {
                let mask = vec![true; ep.actions.len()];
                let tr = net.forward_sequence(&ep.observations, &mask)?;
                let ret: Vec<f64> = ret.iter().enumerate().map(|(t, g)| g - baseline.get(t).unwrap_or(&0.0)).collect();
                let logits: Vec<Vec<f64>> = tr.steps.iter().map(|s| s.logits.clone()).collect();
                let fb = reinforce_feedback(&logits, &ep.actions, &ret, &mask, cfg.entropy_coef)?;
                net.mixed_backward(&tr, &fb, lambdas.as_deref(), cfg.rho, cfg.record_schedule && e == 0)
            })
            .collect::<Result<_>>()?;
        let mut red = BatchReducer::new(cfg.lambda.normalize);
        for mut o in outs {
            if let Some(s) = o.schedule.take() {
                res.schedules.push(s);
                res.base_lambdas.push(lambdas.clone().unwrap_or_default());
            }
            red.push(o);
        }
        let (tr_bp, tr_mix) = red.trace_covs();
        let mut g = red.grads.take().expect("non-empty batch");
        g.scale(1.0 / cfg.n_envs as f64);
        let mut p = net.params_flat();
        opt.ascend(&mut p, &g.flat())?;
        net.set_params_flat(&p)?;
        if mixed {
            let inv = 1.0 / red.pred_records.max(1) as f64;
            let grads: Vec<f64> = red.pred.iter().flatten().map(|v| v * inv).collect();
            let mut pp: Vec<f64> = net.neurons.iter().flat_map(|n| n.pred.iter().copied()).collect();
            pred_opt.step(&mut pp, &grads)?;
            let mut off = 0;
            for n in &mut net.neurons {
                let len = n.pred.len();
                n.pred.copy_from_slice(&pp[off..off + len]);
                off += len;
            }
            if cfg.lambda.adaptive && red.count >= 2 {
                for (k, n) in net.neurons.iter_mut().enumerate() {
                    n.lambda = momentum_step(&red.split[k], n.lambda, cfg.lambda.momentum);
                }
            }
        }
        let lam: Vec<f64> = net.neurons.iter().map(|n| n.lambda).collect();
        let (lambda_mean, lambda_min, lambda_max) = lambda_summary(&lam);
        res.rows.push(RunRow {
            step: batch,
            samples_seen: (batch + 1) * cfg.n_envs,
            metric: Some(success),
            lambda_mean,
            lambda_min,
            lambda_max,
            tr_cov_backprop: tr_bp,
            tr_cov_mixed: tr_mix,
            seed: cfg.seed,
            config_hash: hash.clone(),
        });
        if cfg.stop_at_success.is_some_and(|s| success > s) {
            break;
        }
    }
    res.final_params = net.params_flat();
    Ok(res)
}

/// Mean return at each step index over the episodes that reach it.
fn step_means(returns: &[Vec<f64>]) -> Vec<f64> {
    let t_max = returns.iter().map(Vec::len).max().unwrap_or(0);
    (0..t_max)
        .map(|t| {
            let v: Vec<f64> = returns.iter().filter_map(|r| r.get(t).copied()).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect()
}
