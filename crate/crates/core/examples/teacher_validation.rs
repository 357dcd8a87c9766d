//! Online validation of the teacher: MAE on not-yet-trained-on feedback,
//! with a frozen student and noiseless difficulty features.

use goldilocks::harness::{run_experiment, sparse_ema, ExperimentConfig, Mode};

fn main() -> anyhow::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::from_toml_str("", &overrides)?;
    cfg.student.irt.learn_rate = 0.0;
    cfg.dataset.feature_noise = 0.0;
    let run = run_experiment(&cfg, Mode::Goldilocks)?;
    let mae = sparse_ema(&run.records, cfg.ema_alpha, |r| r.teacher_val_mae);
    let first_below = mae.iter().find(|(_, m)| *m < 0.05);
    for checkpoint in (200..=cfg.total_steps).step_by(200) {
        if let Some((step, m)) = mae.iter().take_while(|(s, _)| *s <= checkpoint).last() {
            println!("step {step:5}  unseen MAE (EMA) {m:.4}");
        }
    }
    match first_below {
        Some((step, m)) => println!("MAE EMA first below 0.05 at step {step} ({m:.4})"),
        None => println!("MAE EMA never fell below 0.05"),
    }
    Ok(())
}
