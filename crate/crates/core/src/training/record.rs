use crate::estimation::SplitMoments;
use crate::sparsenet::{MixedGrads, NetGrads};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// One logged optimisation step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub step: usize,
    pub samples_seen: usize,
    /// Eval reward (bandit) or success rate (labyrinth); empty between evals.
    pub metric: Option<f64>,
    pub lambda_mean: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Summed per-neuron trace covariance of the backpropagated component.
    pub tr_cov_backprop: f64,
    /// Same for the estimate actually applied.
    pub tr_cov_mixed: f64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunResult {
    pub rows: Vec<RunRow>,
    pub final_params: Vec<f64>,
    /// Recorded `θ[t][i]` tables (labyrinth, when requested): one per batch.
    pub schedules: Vec<Vec<Vec<f64>>>,
    pub children: Vec<Vec<usize>>,
    pub base_lambdas: Vec<Vec<f64>>,
}

impl RunResult {
    /// Mean of the logged metric over evaluation points.
    pub fn auc(&self) -> f64 {
        let m: Vec<f64> = self.rows.iter().filter_map(|r| r.metric).collect();
        m.iter().sum::<f64>() / m.len().max(1) as f64
    }

    /// Fraction of rows where the applied estimate had strictly lower
    /// variance than the backpropagated component; the first row is skipped.
    pub fn variance_win_rate(&self) -> f64 {
        let rows = &self.rows[1.min(self.rows.len())..];
        rows.iter().filter(|r| r.tr_cov_mixed < r.tr_cov_backprop).count() as f64 / rows.len().max(1) as f64
    }
}

/// `sha256` of the canonical JSON encoding.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

pub(crate) fn lambda_summary(l: &[f64]) -> (f64, f64, f64) {
    if l.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let mean = l.iter().sum::<f64>() / l.len() as f64;
    let min = l.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max)
}

/// Reduces per-sample backward results in sample order.
pub(crate) struct BatchReducer {
    pub grads: Option<NetGrads>,
    pub pred: Vec<Vec<f64>>,
    pub pred_records: usize,
    /// `(p̃, s̃)` moments per neuron, for the mixing-weight update.
    pub split: Vec<SplitMoments>,
    /// `(p̃, applied)` moments per neuron, for variance logging.
    pub logged: Vec<SplitMoments>,
    pub normalize: bool,
    pub count: usize,
}

impl BatchReducer {
    pub fn new(normalize: bool) -> Self {
        BatchReducer {
            grads: None,
            pred: Vec::new(),
            pred_records: 0,
            split: Vec::new(),
            logged: Vec::new(),
            normalize,
            count: 0,
        }
    }

    pub fn push(&mut self, mg: MixedGrads) {
        if self.logged.is_empty() {
            self.logged = mg.grads.neurons.iter().map(|g| SplitMoments::new(g.len())).collect();
            if mg.is_mixed() {
                self.split = self.logged.clone();
                self.pred = mg.pred.iter().map(|p| vec![0.0; p.len()]).collect();
            }
        }
        for (i, g) in mg.grads.neurons.iter().enumerate() {
            if mg.is_mixed() {
                self.logged[i].push(&mg.p[i], g);
                if self.normalize {
                    self.split[i].push_normalized(&mg.p[i], &mg.s[i]);
                } else {
                    self.split[i].push(&mg.p[i], &mg.s[i]);
                }
            } else {
                self.logged[i].push(g, g);
            }
        }
        for (a, b) in self.pred.iter_mut().zip(&mg.pred) {
            crate::linalg::add_into(b, a);
        }
        self.pred_records += mg.pred_records;
        match &mut self.grads {
            None => self.grads = Some(mg.grads),
            Some(g) => g.add(&mg.grads),
        }
        self.count += 1;
    }

    pub fn trace_covs(&self) -> (f64, f64) {
        self.logged.iter().map(SplitMoments::trace_cov).fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
    }
}
