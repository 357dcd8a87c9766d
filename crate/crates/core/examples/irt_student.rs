//! An item-response student learns fastest on items near its own skill.
//! Each run trains on a single item whose difficulty sits a fixed offset
//! above the current skill.

use goldilocks::grpo::{LossConfig, RewardConfig};
use goldilocks::students::{rollout_with_advantages, student_update, DatasetConfig, IrtConfig, Student, StudentConfig};

fn main() -> anyhow::Result<()> {
    let cfg = StudentConfig::default();
    let reward = RewardConfig::default();
    let loss = LossConfig::default();
    let template = DatasetConfig::default().generate_range(0, 1)?.remove(0);
    println!("{:>7} {:>10} {:>12}", "offset", "p start", "skill gain");
    for offset in [-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0] {
        let mut student = cfg.build(template.features.len(), 1)?;
        let Student::Irt(irt) = &student else { unreachable!() };
        let start = irt.skill;
        let mut q = template.clone();
        q.difficulty = start + offset;
        let p0 = student.true_success_prob(&q)?;
        for step in 1..=500 {
            let (rollout, adv) = rollout_with_advantages(&student, &q, 16, step, 0, &reward, 3)?;
            student_update(&mut student, &q, &adv, &rollout.sampled, IrtConfig::default().learn_rate, &loss)?;
        }
        let Student::Irt(irt) = &student else { unreachable!() };
        println!("{offset:>7.1} {p0:>10.4} {:>12.4}", irt.skill - start);
    }
    Ok(())
}
