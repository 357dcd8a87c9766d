//! Group-relative advantages: empirical standardization against the
//! two-valued closed form, and the utility score the teacher learns to predict.

use goldilocks::grpo::{closed_form_advantages, group_advantages, utility_score, RolloutGroup};

fn main() -> anyhow::Result<()> {
    let g = 16;
    println!("{:>3} {:>6} {:>10} {:>10} {:>10} {:>10} {:>8}", "k", "p", "A+ emp", "A+ exact", "A- emp", "A- exact", "utility");
    for k in 0..=g {
        let rewards: Vec<u8> = (0..g).map(|i| u8::from(i < k)).collect();
        let adv = group_advantages(&RolloutGroup::new(0, rewards, vec![0.0; g])?)?;
        let p = adv.empirical_p;
        match closed_form_advantages(p) {
            Ok((pos, neg)) => println!(
                "{k:>3} {p:>6.3} {:>10.5} {pos:>10.5} {:>10.5} {neg:>10.5} {:>8.4}",
                adv.advantages[0],
                adv.advantages[g - 1],
                utility_score(p)
            ),
            Err(_) => println!("{k:>3} {p:>6.3} {:>10} {:>10} {:>10} {:>10} {:>8.4}", "0", "-", "0", "-", utility_score(p)),
        }
    }

    // a constant format reward shifts every total equally and leaves advantages untouched
    let plain = group_advantages(&RolloutGroup::new(0, vec![1, 0, 0, 1, 0, 0], vec![0.0; 6])?)?;
    let shifted = group_advantages(&RolloutGroup::new(0, vec![1, 0, 0, 1, 0, 0], vec![0.3; 6])?)?;
    let drift = plain.advantages.iter().zip(&shifted.advantages).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("largest change from a +0.3 format shift: {drift:.1e}");
    Ok(())
}
