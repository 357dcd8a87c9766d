use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Ratio};
use super::metrics::{ema, final_accuracy, MetricsRecord};
use super::run::{run_experiment, Mode, RunOutput};
use crate::error::{Error, Result};

/// Curriculum step `n` paired with baseline step `round(ratio * n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedRow {
    pub step: u64,
    pub baseline_step: u64,
    /// Index of each step's record in its table.
    pub goldilocks_index: usize,
    pub baseline_index: usize,
}

pub fn normalized_compare(goldilocks: &[MetricsRecord], baseline: &[MetricsRecord], ratio: Ratio) -> Result<Vec<AlignedRow>> {
    let last = goldilocks.iter().map(|r| r.step).max().unwrap_or(0);
    let needed = ratio.scale(last);
    let available = baseline.iter().map(|r| r.step).max().unwrap_or(0);
    if available < needed {
        return Err(Error::Alignment { needed, available });
    }
    let by_step: std::collections::HashMap<u64, usize> =
        baseline.iter().enumerate().map(|(i, r)| (r.step, i)).collect();
    goldilocks
        .iter()
        .enumerate()
        .map(|(gi, r)| {
            let bs = ratio.scale(r.step);
            let bi = *by_step.get(&bs).ok_or(Error::Alignment { needed: bs, available })?;
            Ok(AlignedRow { step: r.step, baseline_step: bs, goldilocks_index: gi, baseline_index: bi })
        })
        .collect()
}

/// Headline numbers of a paired run, all taken at aligned steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    /// Mean over the final window of the EMA zero-variance fraction.
    pub goldilocks_zero_variance: f64,
    pub baseline_zero_variance: f64,
    /// Mean over the final window of `|mean_reward - 0.5|`.
    pub goldilocks_reward_gap: f64,
    pub baseline_reward_gap: f64,
    /// Last-k validation average at each arm's endpoint.
    pub goldilocks_final_accuracy: f64,
    pub baseline_final_accuracy: f64,
    pub window: usize,
}

impl PairedSummary {
    pub fn zero_variance_ratio(&self) -> f64 {
        self.goldilocks_zero_variance / self.baseline_zero_variance
    }
}

pub fn summarize(
    goldilocks: &[MetricsRecord],
    baseline: &[MetricsRecord],
    aligned: &[AlignedRow],
    alpha: f64,
    window: usize,
    last_k: usize,
) -> Result<PairedSummary> {
    if aligned.is_empty() || window == 0 {
        return Err(Error::InvalidInput("nothing to summarize".into()));
    }
    let zg = ema(&goldilocks.iter().map(|r| f64::from(r.zero_variance_flag)).collect::<Vec<_>>(), alpha);
    let zb = ema(&baseline.iter().map(|r| f64::from(r.zero_variance_flag)).collect::<Vec<_>>(), alpha);
    let tail = &aligned[aligned.len().saturating_sub(window)..];
    let n = tail.len() as f64;
    let mean = |f: &dyn Fn(&AlignedRow) -> f64| tail.iter().map(f).sum::<f64>() / n;
    Ok(PairedSummary {
        goldilocks_zero_variance: mean(&|a| zg[a.goldilocks_index]),
        baseline_zero_variance: mean(&|a| zb[a.baseline_index]),
        goldilocks_reward_gap: mean(&|a| (goldilocks[a.goldilocks_index].mean_reward - 0.5).abs()),
        baseline_reward_gap: mean(&|a| (baseline[a.baseline_index].mean_reward - 0.5).abs()),
        goldilocks_final_accuracy: final_accuracy(goldilocks, last_k)?,
        baseline_final_accuracy: final_accuracy(baseline, last_k)?,
        window: tail.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pub goldilocks: RunOutput,
    pub baseline: RunOutput,
    pub aligned: Vec<AlignedRow>,
    pub summary: PairedSummary,
}

/// Baseline arm config: same everything, `round(ratio * total_steps)` steps.
pub fn baseline_config(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut b = cfg.clone();
    b.total_steps = cfg.compute_ratio.scale(cfg.total_steps);
    b
}

/// Run both arms and compare over the final `window` curriculum steps.
pub fn compare_runs(cfg: &ExperimentConfig, window: usize) -> Result<PairedRun> {
    let goldilocks = run_experiment(cfg, Mode::Goldilocks)?;
    let baseline = run_experiment(&baseline_config(cfg), Mode::Baseline)?;
    let aligned = normalized_compare(&goldilocks.records, &baseline.records, cfg.compute_ratio)?;
    let summary = summarize(&goldilocks.records, &baseline.records, &aligned, cfg.ema_alpha, window, 5)?;
    Ok(PairedRun { goldilocks, baseline, aligned, summary })
}
