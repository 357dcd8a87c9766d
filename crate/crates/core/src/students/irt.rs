use serde::{Deserialize, Serialize};

use super::Question;
use crate::error::{Error, Result};
use crate::grpo::{utility_score, AdvantageSet, LossConfig, LossVariant};
use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IrtConfig {
    pub initial_skill: f64,
    pub discrimination: f64,
    pub learn_rate: f64,
}

impl Default for IrtConfig {
    fn default() -> Self {
        Self {
            initial_skill: -2.0,
            discrimination: 1.5,
            learn_rate: 0.004,
        }
    }
}

impl IrtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discrimination > 0.0 && self.discrimination.is_finite()) {
            return Err(Error::Config { key: "student.irt.discrimination".into(), reason: "must be > 0".into() });
        }
        if !(self.learn_rate >= 0.0 && self.learn_rate.is_finite()) {
            return Err(Error::Config { key: "student.irt.learn_rate".into(), reason: "must be >= 0".into() });
        }
        if !self.initial_skill.is_finite() {
            return Err(Error::Config { key: "student.irt.initial_skill".into(), reason: "must be finite".into() });
        }
        Ok(())
    }
}

/// Item-response learner with a scalar skill.
///
/// Each rollout is correct with probability `sigmoid(a (skill - d))`. The
/// exact GRPO gradient of the Bernoulli log-likelihood with respect to skill,
/// for a group with empirical rate `p`, is `-a sqrt(p (1 - p))`; a descent
/// step with rate `learn_rate / a` therefore raises skill by
/// `learn_rate * sqrt(p (1 - p))`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrtStudent {
    pub skill: f64,
    pub discrimination: f64,
    pub learn_rate: f64,
    pub(super) pending: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl IrtStudent {
    pub fn new(cfg: &IrtConfig) -> Self {
        Self {
            skill: cfg.initial_skill,
            discrimination: cfg.discrimination,
            learn_rate: cfg.learn_rate,
            pending: 0.0,
        }
    }

    pub fn success_prob(&self, q: &Question) -> f64 {
        sigmoid(self.discrimination * (self.skill - q.difficulty))
    }

    pub(super) fn sample_rewards(&self, q: &Question, g: usize, step: u64, attempt: u32, seed: u64) -> Vec<u8> {
        let p = self.success_prob(q);
        (0..g as u64)
            .map(|i| {
                let u = rng::unit(seed, &[domain::ROLLOUT, step, q.id, u64::from(attempt), i]);
                u8::from(u < p)
            })
            .collect()
    }

    /// Exact policy-gradient loss gradient with respect to skill:
    /// `-(1/G) sum_i A_i d/ds log pi(o_i)`.
    pub fn grpo_gradient(&self, q: &Question, adv: &AdvantageSet) -> f64 {
        let p = self.success_prob(q);
        let a = self.discrimination;
        if adv.is_zero_variance() {
            return 0.0;
        }
        let g = adv.group_size() as f64;
        let k = adv.correct as f64;
        let (pos, neg) = crate::grpo::closed_form_advantages(adv.empirical_p).unwrap_or((0.0, 0.0));
        -(k * pos * a * (1.0 - p) + (g - k) * neg * (-a * p)) / g
    }

    /// `d/ds` of the Bernoulli entropy of one rollout.
    pub fn entropy_gradient(&self, q: &Question) -> f64 {
        let p = self.success_prob(q);
        if p <= 0.0 || p >= 1.0 {
            return 0.0;
        }
        self.discrimination * p * (1.0 - p) * ((1.0 - p) / p).ln()
    }

    /// Queue this group's skill increment and return the gradient norm.
    pub(super) fn accumulate(&mut self, q: &Question, adv: &AdvantageSet, loss: &LossConfig) -> Result<f64> {
        let grad = self.grpo_gradient(q, adv);
        let mut increment = self.learn_rate * utility_score(adv.empirical_p);
        let mut norm = grad.abs();
        if loss.variant == LossVariant::GrpoEntropy {
            let dh = self.entropy_gradient(q);
            increment += self.learn_rate / self.discrimination * loss.entropy_beta * dh;
            norm = (grad - loss.entropy_beta * dh).abs();
        }
        self.pending += increment;
        Ok(norm)
    }

    pub(super) fn apply_update(&mut self) {
        self.skill += self.pending;
        self.pending = 0.0;
    }

    /// Exact expected accuracy `mean_q p_q`.
    pub fn expected_accuracy(&self, validation: &[Question]) -> f64 {
        validation.iter().map(|q| self.success_prob(q)).sum::<f64>() / validation.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::{group_advantages, RolloutGroup};
    use crate::students::TaskPayload;

    fn item(d: f64) -> Question {
        Question { id: 3, features: vec![d], difficulty: d, payload: TaskPayload::Irt }
    }

    fn student(skill: f64, a: f64, lr: f64) -> IrtStudent {
        IrtStudent::new(&IrtConfig { initial_skill: skill, discrimination: a, learn_rate: lr })
    }

    fn adv_for(k: usize, g: usize) -> AdvantageSet {
        let ver = (0..g).map(|i| u8::from(i < k)).collect();
        group_advantages(&RolloutGroup::new(3, ver, vec![0.0; g]).unwrap()).unwrap()
    }

    #[test]
    fn success_probability_examples() {
        assert_eq!(student(0.4, 2.0, 0.1).success_prob(&item(0.4)), 0.5);
        let p = student(3f64.ln(), 1.0, 0.1).success_prob(&item(0.0));
        assert!((p - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_leaves_skill_unchanged() {
        let mut s = student(0.0, 1.0, 0.1);
        for k in [0, 16] {
            s.accumulate(&item(0.0), &adv_for(k, 16), &LossConfig::default()).unwrap();
            s.apply_update();
            assert_eq!(s.skill, 0.0);
        }
    }

    #[test]
    fn half_success_increments_by_lr_times_half() {
        let mut s = student(0.0, 1.0, 0.1);
        let norm = s.accumulate(&item(0.0), &adv_for(8, 16), &LossConfig::default()).unwrap();
        s.apply_update();
        assert_eq!(s.skill, 0.05);
        assert!((norm - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_per_rollout_sum() {
        let s = student(0.3, 1.7, 0.1);
        let q = item(-0.2);
        let p = s.success_prob(&q);
        for k in 1..16 {
            let adv = adv_for(k, 16);
            let direct: f64 = adv
                .advantages
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let dlog = if i < k { 1.7 * (1.0 - p) } else { -1.7 * p };
                    -a * dlog / 16.0
                })
                .sum();
            assert!((s.grpo_gradient(&q, &adv) - direct).abs() < 1e-12);
            assert!((direct + 1.7 * utility_score(k as f64 / 16.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let q = item(0.1);
        for skill in [-2.0, -0.3, 0.0, 0.8, 2.5] {
            let h = |s: f64| {
                let p = student(s, 1.3, 0.0).success_prob(&q);
                -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
            };
            let fd = (h(skill + 1e-6) - h(skill - 1e-6)) / 2e-6;
            let got = student(skill, 1.3, 0.0).entropy_gradient(&q);
            assert!((fd - got).abs() <= 1e-6 * got.abs().max(1e-3));
        }
    }

    fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
        let mut c = 1.0;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    #[test]
    fn expected_gain_peaks_at_even_odds() {
        // exact expectation of sqrt(p_hat (1 - p_hat)) over Binomial(16, p_q)
        let s = student(0.0, 1.0, 1.0);
        let gain = |d: f64| {
            let p = s.success_prob(&item(d));
            (0..=16).map(|k| binomial_pmf(16, k, p) * utility_score(k as f64 / 16.0)).sum::<f64>()
        };
        let grid: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.1).collect();
        let best = grid.iter().cloned().fold((f64::NAN, f64::NEG_INFINITY), |acc, d| {
            let g = gain(d);
            if g > acc.1 { (d, g) } else { acc }
        });
        assert!(best.0.abs() < 1e-9, "peak at d = {}", best.0);
    }

    #[test]
    fn rollouts_match_binomial() {
        let s = student(0.0, 1.0, 0.0);
        let q = item(0.0);
        let reps = 10_000;
        let mean: f64 = (0..reps)
            .map(|r| s.sample_rewards(&q, 16, r, 0, 5).iter().map(|&x| f64::from(x)).sum::<f64>() / 16.0)
            .sum::<f64>()
            / reps as f64;
        let se = (0.25 / (16.0 * reps as f64)).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn forced_item_is_always_solved() {
        let s = student(0.0, 1.0, 0.0);
        assert!(s.sample_rewards(&item(-1e9), 16, 0, 0, 1).iter().all(|&r| r == 1));
    }

    #[test]
    fn saturated_skill_gives_full_accuracy() {
        let s = student(1e6, 1.0, 0.0);
        let val: Vec<Question> = (-5..5).map(|d| item(d as f64)).collect();
        assert_eq!(s.expected_accuracy(&val), 1.0);
    }

    #[test]
    fn expected_accuracy_matches_monte_carlo() {
        let s = student(0.2, 1.1, 0.0);
        let val: Vec<Question> = (-10..10).map(|d| Question { id: (d + 10) as u64, ..item(d as f64 * 0.3) }).collect();
        let exact = s.expected_accuracy(&val);
        let reps = 2_000u64;
        let mut hits = 0u64;
        for r in 0..reps {
            for q in &val {
                hits += u64::from(s.sample_rewards(q, 2, r, 0, 77)[0]);
            }
        }
        let n = (reps * val.len() as u64) as f64;
        let mc = hits as f64 / n;
        let se = (exact * (1.0 - exact) / n).sqrt();
        assert!((mc - exact).abs() < 3.0 * se, "mc {mc} exact {exact}");
    }
}
