//! The expected GRPO gradient norm of a softmax policy scales with the reward
//! standard deviation sqrt(p (1 - p)). The policy is calibrated to hit each
//! success probability exactly and the expectation is taken over the full
//! output space, so no sampling noise enters.

use goldilocks::grpo::expected_grpo_gradient;
use goldilocks::students::{DatasetConfig, DatasetKind, PolicyConfig, PolicyStudent};

fn main() -> anyhow::Result<()> {
    let items = DatasetConfig { kind: DatasetKind::Arithmetic, ..DatasetConfig::default() }.generate_range(0, 1)?;
    let q = &items[0];
    let answer = q.answer().expect("arithmetic items carry an answer").to_vec();
    let student = PolicyStudent::new(&PolicyConfig { init_scale: 0.5, ..PolicyConfig::default() }, q.features.len(), 7)?;

    println!("{:>5} {:>10} {:>12} {:>8}", "p", "sd", "|grad|", "ratio");
    for i in 1..20 {
        let p = i as f64 / 20.0;
        let calibrated = student.with_success_prob(q, p)?;
        let (_, grad) = expected_grpo_gradient(&calibrated, &q.features, |s| s == answer.as_slice())?;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let sd = (p * (1.0 - p)).sqrt();
        println!("{p:>5.2} {sd:>10.5} {norm:>12.6} {:>8.4}", norm / sd);
    }
    Ok(())
}
