use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::students::Question;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    LastPosition,
}

/// Logit bound for the output sigmoid; keeps predictions strictly inside `(0, 0.5)`.
const LOGIT_BOUND: f64 = 30.0;

/// Utility predictor `0.5 * sigmoid(w . pool(encode(x)) + b)`.
///
/// The encoder reads the feature vector as a sequence: position `t` sees
/// features `0..=t` (a causal prefix) and emits `tanh(W x_{<=t} + c)`. Mean
/// pooling averages all positions; last-position pooling keeps only the final
/// one, which sees every feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherModel {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub pooling: Pooling,
    /// Row-major `hidden_dim x feature_dim`.
    pub encoder_weights: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Forward {
    /// Per-position embeddings, `positions x hidden`.
    embed: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    sig: f64,
    out: f64,
}

impl TeacherModel {
    pub fn new(feature_dim: usize, hidden_dim: usize, pooling: Pooling, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[domain::TEACHER_INIT]);
        let enc_scale = 1.0 / (feature_dim as f64).sqrt();
        let head_scale = 0.1 / (hidden_dim as f64).sqrt();
        let encoder_weights = (0..hidden_dim * feature_dim)
            .map(|_| r.sample::<f64, _>(StandardNormal) * enc_scale)
            .collect();
        let encoder_bias = (0..hidden_dim).map(|_| r.sample::<f64, _>(StandardNormal) * 0.1).collect();
        let head_weights = (0..hidden_dim)
            .map(|_| r.sample::<f64, _>(StandardNormal) * head_scale)
            .collect();
        Self {
            feature_dim,
            hidden_dim,
            pooling,
            encoder_weights,
            encoder_bias,
            head_weights,
            head_bias: 0.0,
        }
    }

    pub fn num_params(&self) -> usize {
        self.hidden_dim * self.feature_dim + 2 * self.hidden_dim + 1
    }

    /// Flat parameters in the order encoder weights, encoder bias, head weights, head bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        p.extend_from_slice(&self.encoder_weights);
        p.extend_from_slice(&self.encoder_bias);
        p.extend_from_slice(&self.head_weights);
        p.push(self.head_bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::Shape { expected: self.num_params(), got: p.len() });
        }
        let (hf, h) = (self.hidden_dim * self.feature_dim, self.hidden_dim);
        self.encoder_weights.copy_from_slice(&p[..hf]);
        self.encoder_bias.copy_from_slice(&p[hf..hf + h]);
        self.head_weights.copy_from_slice(&p[hf + h..hf + 2 * h]);
        self.head_bias = p[hf + 2 * h];
        Ok(())
    }

    fn check(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(Error::Shape { expected: self.feature_dim, got: features.len() });
        }
        Ok(())
    }

    fn positions(&self) -> std::ops::Range<usize> {
        match self.pooling {
            Pooling::Mean => 0..self.feature_dim,
            Pooling::LastPosition => self.feature_dim - 1..self.feature_dim,
        }
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let (h, f) = (self.hidden_dim, self.feature_dim);
        let mut pre = self.encoder_bias.clone();
        let mut embed = Vec::new();
        let keep = self.positions();
        for t in 0..f {
            if x[t] != 0.0 {
                for (j, p) in pre.iter_mut().enumerate() {
                    *p += self.encoder_weights[j * f + t] * x[t];
                }
            }
            if keep.contains(&t) {
                embed.push(pre.iter().map(|v| v.tanh()).collect::<Vec<_>>());
            }
        }
        let n = embed.len() as f64;
        let mut pooled = vec![0.0; h];
        for e in &embed {
            for (p, v) in pooled.iter_mut().zip(e) {
                *p += v / n;
            }
        }
        let z = self.head_bias + self.head_weights.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>();
        let sig = sigmoid(z.clamp(-LOGIT_BOUND, LOGIT_BOUND));
        Forward { embed, pooled, sig, out: 0.5 * sig }
    }

    pub fn predict_features(&self, features: &[f64]) -> Result<f64> {
        self.check(features)?;
        Ok(self.forward(features).out)
    }

    pub fn predict_utility(&self, q: &Question) -> Result<f64> {
        self.predict_features(&q.features)
    }

    /// Prediction and `grad += weight * d prediction / d params`.
    pub fn add_prediction_grad(&self, features: &[f64], weight: f64, grad: &mut [f64]) -> Result<f64> {
        self.check(features)?;
        if grad.len() != self.num_params() {
            return Err(Error::Shape { expected: self.num_params(), got: grad.len() });
        }
        let (h, f) = (self.hidden_dim, self.feature_dim);
        let fw = self.forward(features);
        let dz = weight * 0.5 * fw.sig * (1.0 - fw.sig);
        let (hf, off_w) = (h * f, h * f + h);
        for j in 0..h {
            grad[off_w + j] += dz * fw.pooled[j];
        }
        grad[off_w + h] += dz;
        let keep = self.positions();
        let n = fw.embed.len() as f64;
        // d pooled_j / d pre_{t,j} = (1 - e_{t,j}^2) / n; pre_t depends on x_i for i <= t,
        // so accumulate a suffix sum over positions
        let mut suffix = vec![0.0; h];
        let mut k = fw.embed.len();
        for t in (0..f).rev() {
            if keep.contains(&t) {
                k -= 1;
                for j in 0..h {
                    suffix[j] += (1.0 - fw.embed[k][j].powi(2)) / n;
                }
            }
            if t == keep.start {
                for j in 0..h {
                    grad[hf + j] += dz * self.head_weights[j] * suffix[j];
                }
            }
            if features[t] != 0.0 {
                for j in 0..h {
                    grad[j * f + t] += dz * self.head_weights[j] * suffix[j] * features[t];
                }
            }
        }
        Ok(fw.out)
    }

    /// Batch MSE `mean (f(x) - y)^2` and its gradient.
    pub fn mse_and_gradient(&self, batch: &[(&[f64], f64)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        for &(x, y) in batch {
            let pred = self.predict_features(x)?;
            let r = pred - y;
            loss += r * r / n;
            self.add_prediction_grad(x, 2.0 * r / n, &mut grad)?;
        }
        Ok((loss, grad))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let mut text = serde_json::to_string_pretty(&ck)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        let m = ck.model;
        let (h, f) = (m.hidden_dim, m.feature_dim);
        if f == 0 || m.encoder_weights.len() != h * f || m.encoder_bias.len() != h || m.head_weights.len() != h {
            return Err(Error::Checkpoint("parameter shapes do not match dimensions".into()));
        }
        Ok(m)
    }
}

pub const CHECKPOINT_FORMAT: &str = "goldilocks-teacher";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: TeacherModel,
}

/// Mean and population standard deviation of predictions over `candidates`.
pub fn prediction_stats(model: &TeacherModel, candidates: &[Question]) -> Result<(f64, f64)> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates".into()));
    }
    let preds = candidates
        .iter()
        .map(|q| model.predict_utility(q))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_std(&preds))
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
