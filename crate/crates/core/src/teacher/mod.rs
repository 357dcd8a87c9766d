//! Online utility teacher: epsilon-greedy selection over candidate pools and
//! periodic MSE refinement on a sliding replay window.

mod model;
mod replay;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use model::{prediction_stats, Pooling, TeacherModel, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use replay::{record_feedback, replay_sample, ReplayBuffer, ReplaySample};

use crate::error::{Error, Result};
use crate::grpo::RolloutGroup;
use crate::rng::{self, domain, StreamRng};
use crate::students::Question;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub candidate_size: usize,
    pub epsilon: f64,
    pub replay_capacity: usize,
    /// Feedback records between refinement passes.
    pub update_every: usize,
    pub epochs_per_update: usize,
    pub batch_size: usize,
    pub learn_rate: f64,
    /// Accepted for interface parity; selection is argmax / uniform and never reads it.
    pub temperature_tau: f64,
    pub hidden_dim: usize,
    pub pooling: Pooling,
    pub optimizer: OptimizerKind,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            candidate_size: 8,
            epsilon: 0.2,
            replay_capacity: 64,
            update_every: 4,
            epochs_per_update: 4,
            batch_size: 8,
            learn_rate: 0.7,
            temperature_tau: 1.0,
            hidden_dim: 16,
            pooling: Pooling::Mean,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::Config { key: format!("teacher.{key}"), reason: reason.into() });
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", "must be in [0, 1]");
        }
        for (key, v) in [
            ("candidate_size", self.candidate_size),
            ("replay_capacity", self.replay_capacity),
            ("update_every", self.update_every),
            ("epochs_per_update", self.epochs_per_update),
            ("batch_size", self.batch_size),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return bad(key, "must be >= 1");
            }
        }
        if !(self.learn_rate >= 0.0 && self.learn_rate.is_finite()) {
            return bad("learn_rate", "must be finite and >= 0");
        }
        Ok(())
    }
}

/// Result of one selection call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Position of the chosen question in the dataset slice.
    pub index: usize,
    pub question_id: u64,
    pub explored: bool,
    pub candidate_ids: Vec<u64>,
    pub predictions: Vec<f64>,
    pub prediction_mean: f64,
    pub prediction_std: f64,
}

/// Draw `K` distinct candidates uniformly; with probability `epsilon` return a
/// uniform one of them, else the highest predicted utility (ties to the
/// smallest question id).
pub fn select_query(model: &TeacherModel, dataset: &[Question], cfg: &TeacherConfig, rng: &mut impl Rng) -> Result<Selection> {
    let k = cfg.candidate_size;
    if dataset.len() < k {
        return Err(Error::InsufficientCandidates { needed: k, available: dataset.len() });
    }
    let idx = rand::seq::index::sample(rng, dataset.len(), k).into_vec();
    let predictions = idx
        .iter()
        .map(|&i| model.predict_utility(&dataset[i]))
        .collect::<Result<Vec<_>>>()?;
    let explored = rng.gen::<f64>() < cfg.epsilon;
    let pick = if explored {
        rng.gen_range(0..k)
    } else {
        let mut best = 0;
        for j in 1..k {
            let (pj, pb) = (predictions[j], predictions[best]);
            if pj > pb || (pj == pb && dataset[idx[j]].id < dataset[idx[best]].id) {
                best = j;
            }
        }
        best
    };
    let (prediction_mean, prediction_std) = model::mean_std(&predictions);
    Ok(Selection {
        index: idx[pick],
        question_id: dataset[idx[pick]].id,
        explored,
        candidate_ids: idx.iter().map(|&i| dataset[i].id).collect(),
        predictions,
        prediction_mean,
        prediction_std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    /// Model version after this update.
    pub version: u64,
    /// Mean pre-step batch MSE of each epoch.
    pub epoch_mse: Vec<f64>,
    /// First-epoch MAE over samples no earlier update has trained on.
    pub unseen_mae: Option<f64>,
    pub unseen_count: usize,
    pub buffer_len: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        Self { kind, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                self.t += 1;
                let (c1, c2) = (1.0 - B1.powi(self.t), 1.0 - B2.powi(self.t));
                for i in 0..params.len() {
                    self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
                    self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
                    params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

/// One refinement pass: shuffle the buffer once into mini-batches and run
/// `epochs_per_update` epochs of gradient steps on the batch MSE. Samples with
/// `inserted_at > seen_through` have not been trained on before; their
/// first-epoch absolute errors, taken before the step on their batch, give the
/// unseen-sample MAE.
fn refine(
    model: &mut TeacherModel,
    opt: &mut Optimizer,
    buffer: &ReplayBuffer,
    cfg: &TeacherConfig,
    seen_through: Option<u64>,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, Option<f64>, usize)> {
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    order.shuffle(rng);
    let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
    let is_new = |s: &ReplaySample| seen_through.is_none_or(|w| s.inserted_at > w);
    let mut epoch_mse = Vec::with_capacity(cfg.epochs_per_update);
    let (mut abs_sum, mut unseen) = (0.0, 0usize);
    let mut params = model.params();
    for epoch in 0..cfg.epochs_per_update {
        let mut sq = 0.0;
        for batch in &batches {
            let items: Vec<(&[f64], f64)> = batch
                .iter()
                .map(|&i| {
                    let s = buffer.get(i).expect("index within buffer");
                    (s.features.as_slice(), s.target)
                })
                .collect();
            if epoch == 0 {
                for &i in batch.iter() {
                    let s = buffer.get(i).expect("index within buffer");
                    if is_new(s) {
                        abs_sum += (model.predict_features(&s.features)? - s.target).abs();
                        unseen += 1;
                    }
                }
            }
            let (loss, grad) = model.mse_and_gradient(&items)?;
            sq += loss * items.len() as f64;
            opt.step(&mut params, &grad, cfg.learn_rate);
            model.set_params(&params)?;
        }
        epoch_mse.push(sq / buffer.len() as f64);
    }
    let mae = (unseen > 0).then(|| abs_sum / unseen as f64);
    Ok((epoch_mse, mae, unseen))
}

/// Teacher state owned by one logical actor: model, replay window, schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    pub model: TeacherModel,
    pub buffer: ReplayBuffer,
    cfg: TeacherConfig,
    opt: Optimizer,
    seed: u64,
    selection_seed: u64,
    selections: u64,
    feedback: u64,
    since_update: usize,
    seen_through: Option<u64>,
    version: u64,
}

impl Teacher {
    pub fn new(cfg: &TeacherConfig, feature_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        log::info!("constructing teacher (features {feature_dim}, hidden {})", cfg.hidden_dim);
        let model = TeacherModel::new(feature_dim, cfg.hidden_dim, cfg.pooling, seed);
        Self::with_model(cfg, model, seed)
    }

    pub fn with_model(cfg: &TeacherConfig, model: TeacherModel, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = model.num_params();
        Ok(Self {
            model,
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            cfg: cfg.clone(),
            opt: Optimizer::new(cfg.optimizer, n),
            seed,
            selection_seed: seed,
            selections: 0,
            feedback: 0,
            since_update: 0,
            seen_through: None,
            version: 0,
        })
    }

    /// Use a separate seed for the selection stream.
    pub fn with_selection_seed(mut self, seed: u64) -> Self {
        self.selection_seed = seed;
        self
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.cfg
    }

    /// Number of completed refinement passes.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn feedback_count(&self) -> u64 {
        self.feedback
    }

    pub fn select(&mut self, dataset: &[Question]) -> Result<Selection> {
        let mut r = rng::stream(self.selection_seed, &[domain::SELECTION, self.selections]);
        let s = select_query(&self.model, dataset, &self.cfg, &mut r)?;
        self.selections += 1;
        Ok(s)
    }

    pub fn record(&mut self, q: &Question, group: &RolloutGroup) {
        record_feedback(&mut self.buffer, q, group, self.feedback);
        self.feedback += 1;
        self.since_update += 1;
    }

    /// Refine once `update_every` records have arrived since the last pass.
    pub fn maybe_update(&mut self) -> Result<Option<UpdateReport>> {
        if self.since_update < self.cfg.update_every {
            return Ok(None);
        }
        self.since_update = 0;
        if self.buffer.is_empty() {
            let msg = "update triggered with an empty replay buffer; skipped".to_string();
            warn!("{msg}");
            return Ok(Some(UpdateReport {
                version: self.version,
                epoch_mse: Vec::new(),
                unseen_mae: None,
                unseen_count: 0,
                buffer_len: 0,
                warning: Some(msg),
            }));
        }
        let mut r = rng::stream(self.seed, &[domain::TEACHER_SHUFFLE, self.version]);
        let (epoch_mse, unseen_mae, unseen_count) =
            refine(&mut self.model, &mut self.opt, &self.buffer, &self.cfg, self.seen_through, &mut r)?;
        self.seen_through = self.buffer.iter().map(|s| s.inserted_at).max();
        self.version += 1;
        Ok(Some(UpdateReport {
            version: self.version,
            epoch_mse,
            unseen_mae,
            unseen_count,
            buffer_len: self.buffer.len(),
            warning: None,
        }))
    }
}
