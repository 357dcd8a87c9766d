use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row per selected prompt. Teacher columns are empty for the baseline;
/// `teacher_val_mae` is filled on rows where a refinement report arrived and
/// `validation_accuracy` on evaluation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub question_id: u64,
    /// Mean total reward of the group.
    pub mean_reward: f64,
    /// Population std of the group's total rewards.
    pub reward_std: f64,
    pub zero_variance_flag: u8,
    /// Norm of this group's gradient contribution.
    pub grad_norm: f64,
    /// Extra rollout groups drawn to satisfy the mixed-batch constraint.
    pub resamples: u32,
    pub teacher_mu: Option<f64>,
    pub teacher_sigma: Option<f64>,
    pub teacher_version: Option<u64>,
    pub teacher_val_mae: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

/// Column names in file order.
pub const CSV_COLUMNS: [&str; 12] = [
    "step",
    "question_id",
    "mean_reward",
    "reward_std",
    "zero_variance_flag",
    "grad_norm",
    "resamples",
    "teacher_mu",
    "teacher_sigma",
    "teacher_version",
    "teacher_val_mae",
    "validation_accuracy",
];

/// Append-only CSV sink, flushed per row.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { inner: csv::Writer::from_writer(file) })
    }

    pub fn write(&mut self, r: &MetricsRecord) -> Result<()> {
        self.inner.serialize(r)?;
        self.inner.flush().map_err(|e| Error::io("<metrics>", e))?;
        Ok(())
    }
}

pub fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    })?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<MetricsRecord>, _>>()?)
}

/// Exponential moving average with `s_0 = x_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSeries {
    pub alpha: f64,
    pub values: Vec<f64>,
}

impl SmoothedSeries {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, values: Vec::new() }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        let s = match self.values.last() {
            Some(prev) => self.alpha * prev + (1.0 - self.alpha) * x,
            None => x,
        };
        self.values.push(s);
        s
    }

    pub fn from_values(alpha: f64, xs: impl IntoIterator<Item = f64>) -> Self {
        let mut s = Self::new(alpha);
        xs.into_iter().for_each(|x| {
            s.push(x);
        });
        s
    }
}

pub fn ema(xs: &[f64], alpha: f64) -> Vec<f64> {
    SmoothedSeries::from_values(alpha, xs.iter().copied()).values
}

/// EMA over the rows where `f` is present, keyed by step.
pub fn sparse_ema(records: &[MetricsRecord], alpha: f64, f: impl Fn(&MetricsRecord) -> Option<f64>) -> Vec<(u64, f64)> {
    let mut s = SmoothedSeries::new(alpha);
    records
        .iter()
        .filter_map(|r| f(r).map(|x| (r.step, s.push(x))))
        .collect()
}

/// Mean of the last `last_k` validation accuracies.
pub fn final_accuracy(records: &[MetricsRecord], last_k: usize) -> Result<f64> {
    let evals: Vec<f64> = records.iter().filter_map(|r| r.validation_accuracy).collect();
    if last_k == 0 || evals.len() < last_k {
        return Err(Error::InvalidInput(format!(
            "need {last_k} evaluation rows, have {}",
            evals.len()
        )));
    }
    Ok(evals[evals.len() - last_k..].iter().sum::<f64>() / last_k as f64)
}
