//! Paired curriculum vs uniform run on the reference IRT scenario.
//!
//! `cargo run --release --example paired_run -- [seed ...] [key=value ...]`

use goldilocks::harness::{compare_runs, sparse_ema, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let (overrides, seeds): (Vec<String>, Vec<String>) = std::env::args().skip(1).partition(|a| a.contains('='));
    let seeds: Vec<u64> = seeds.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    let seeds = if seeds.is_empty() { vec![1, 2, 3] } else { seeds };
    for seed in seeds {
        let base = ExperimentConfig::default().with_seed(seed).to_toml_string();
        let cfg = ExperimentConfig::from_toml_str(&base, &overrides)?;
        let run = compare_runs(&cfg, 500)?;
        let s = &run.summary;
        let mae = sparse_ema(&run.goldilocks.records, cfg.ema_alpha, |r| r.teacher_val_mae);
        let at = |step: u64| mae.iter().take_while(|(s, _)| *s <= step).last().map(|p| p.1);
        println!(
            "seed {seed}: zero-variance {:.3} vs {:.3} (ratio {:.2}) | |reward-0.5| {:.3} vs {:.3} | final acc {:.4} vs {:.4} | mae ema @200 {:?} @2000 {:?}",
            s.goldilocks_zero_variance,
            s.baseline_zero_variance,
            s.zero_variance_ratio(),
            s.goldilocks_reward_gap,
            s.baseline_reward_gap,
            s.goldilocks_final_accuracy,
            s.baseline_final_accuracy,
            at(200),
            at(cfg.total_steps),
        );
    }
    Ok(())
}
