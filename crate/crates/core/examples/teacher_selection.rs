//! The teacher on its own: it sees only item features, receives verification
//! rewards from a hidden success curve, and learns to rank candidates by
//! reward variance. Exploration frequency follows epsilon.

use goldilocks::grpo::{utility_score, RewardConfig, RolloutGroup};
use goldilocks::rng;
use goldilocks::students::DatasetConfig;
use goldilocks::teacher::{Teacher, TeacherConfig};
use rand::Rng;

fn main() -> anyhow::Result<()> {
    let data = DatasetConfig { feature_noise: 0.0, ..DatasetConfig::default() };
    let items = data.generate_range(0, 2_000)?;
    let cfg = TeacherConfig::default();
    let mut teacher = Teacher::new(&cfg, data.feature_dim, 5)?;
    let truth = |d: f64| 1.0 / (1.0 + (-1.5 * (1.0 - d)).exp());
    let mut r = rng::stream(9, &[]);
    let reward = RewardConfig::default();

    let (mut explored, mut picked_utility) = (0usize, 0.0);
    for n in 1..=3_000u64 {
        let s = teacher.select(&items)?;
        let q = &items[s.index];
        explored += usize::from(s.explored);
        picked_utility += utility_score(truth(q.difficulty));
        let rewards: Vec<u8> = (0..16).map(|_| u8::from(r.gen::<f64>() < truth(q.difficulty))).collect();
        teacher.record(q, &RolloutGroup::from_verification(q.id, rewards, n, &reward)?);
        if let Some(report) = teacher.maybe_update()? {
            if report.version % 150 == 0 {
                println!(
                    "update {:4}: unseen MAE {:.4}, mean true utility of picks {:.4}, explored {:.3}",
                    report.version,
                    report.unseen_mae.unwrap_or(f64::NAN),
                    picked_utility / n as f64,
                    explored as f64 / n as f64
                );
            }
        }
    }
    let uniform = items.iter().map(|q| utility_score(truth(q.difficulty))).sum::<f64>() / items.len() as f64;
    println!("mean true utility under uniform choice: {uniform:.4}");
    Ok(())
}
