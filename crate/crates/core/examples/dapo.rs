//! Clipped surrogate with asymmetric bounds, the mixed-group requirement, and
//! how resampling changes the zero-variance rate of a uniform curriculum.

use goldilocks::grpo::{clipped_surrogate, LossConfig, LossVariant};
use goldilocks::harness::{run_experiment, ExperimentConfig, Mode};

fn main() -> anyhow::Result<()> {
    let cfg = LossConfig { clip_low: 0.2, clip_high: 0.28, ..LossConfig::default() };
    for (ratio, adv) in [(1.5, 1.0), (0.5, -1.0), (1.1, 1.0), (0.7, 1.0), (1.4, -1.0)] {
        let v = clipped_surrogate(&[vec![ratio]], &[adv], &cfg)?;
        println!("ratio {ratio:.2}, advantage {adv:+.0}: surrogate {v:+.4}");
    }

    let mut exp = ExperimentConfig::default();
    exp.total_steps = 600;
    for variant in [LossVariant::Grpo, LossVariant::Dapo] {
        exp.loss.variant = variant;
        let run = run_experiment(&exp, Mode::Baseline)?;
        let zero = run.records.iter().filter(|r| r.zero_variance_flag == 1).count();
        let resamples: u64 = run.records.iter().map(|r| u64::from(r.resamples)).sum();
        println!(
            "{variant:?}: {zero} zero-variance steps of {}, {resamples} extra groups sampled, final accuracy {:.4}",
            run.records.len(),
            run.records.last().and_then(|r| r.validation_accuracy).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
