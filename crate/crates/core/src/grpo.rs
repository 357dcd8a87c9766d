//! Rewards, group-relative advantages, and the three policy losses.
//!
//! The total reward of a rollout is `r_format + r_ver` with a binary
//! verification reward. Advantages are the group-standardized total rewards
//! using the population standard deviation, so for a constant format reward a
//! group with empirical success rate `p` yields exactly two advantage values,
//! `(1 - p) / sqrt(p (1 - p))` and `-p / sqrt(p (1 - p))`.
//!
//! Losses are generic over [`PolicyView`], a differentiable sequence policy
//! with flat parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Format-reward model. After `format_warmup_steps` the format reward is the
/// constant `format_constant`; before that it carries a per-step perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub format_constant: f64,
    pub format_warmup_steps: u64,
    pub format_noise_amplitude: f64,
    pub noise_seed: u64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            format_constant: 0.0,
            format_warmup_steps: 0,
            format_noise_amplitude: 0.0,
            noise_seed: 0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.format_constant.is_finite() {
            return Err(Error::Config {
                key: "reward.format_constant".into(),
                reason: "must be finite".into(),
            });
        }
        if !(self.format_noise_amplitude >= 0.0 && self.format_noise_amplitude.is_finite()) {
            return Err(Error::Config {
                key: "reward.format_noise_amplitude".into(),
                reason: "must be finite and >= 0".into(),
            });
        }
        Ok(())
    }

    /// Format reward emitted at `step`. It depends on the step only, so it is
    /// shared by every rollout of a group.
    pub fn format_reward(&self, step: u64) -> f64 {
        if step >= self.format_warmup_steps || self.format_noise_amplitude == 0.0 {
            return self.format_constant;
        }
        let u = rng::unit(self.noise_seed, &[rng::domain::FORMAT_NOISE, step]);
        self.format_constant + self.format_noise_amplitude * (2.0 * u - 1.0)
    }
}

pub fn total_reward(r_ver: u8, step: u64, cfg: &RewardConfig) -> f64 {
    cfg.format_reward(step) + f64::from(r_ver)
}

/// Rewards of `G` rollouts for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub question_id: u64,
    pub rewards_ver: Vec<u8>,
    pub rewards_format: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(question_id: u64, rewards_ver: Vec<u8>, rewards_format: Vec<f64>) -> Result<Self> {
        if rewards_ver.len() != rewards_format.len() {
            return Err(Error::InvalidGroup(format!(
                "{} verification rewards but {} format rewards",
                rewards_ver.len(),
                rewards_format.len()
            )));
        }
        if let Some(bad) = rewards_ver.iter().find(|&&r| r > 1) {
            return Err(Error::InvalidGroup(format!("verification reward {bad} is not binary")));
        }
        Ok(Self {
            question_id,
            rewards_ver,
            rewards_format,
        })
    }

    /// Group whose format rewards all come from `cfg` at `step`.
    pub fn from_verification(question_id: u64, rewards_ver: Vec<u8>, step: u64, cfg: &RewardConfig) -> Result<Self> {
        let fmt = cfg.format_reward(step);
        let n = rewards_ver.len();
        Self::new(question_id, rewards_ver, vec![fmt; n])
    }

    pub fn group_size(&self) -> usize {
        self.rewards_ver.len()
    }

    pub fn correct_count(&self) -> usize {
        self.rewards_ver.iter().filter(|&&r| r == 1).count()
    }

    pub fn empirical_p(&self) -> f64 {
        self.correct_count() as f64 / self.group_size() as f64
    }

    pub fn total_rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.rewards_ver
            .iter()
            .zip(&self.rewards_format)
            .map(|(&v, &f)| f + f64::from(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageSet {
    pub advantages: Vec<f64>,
    pub empirical_p: f64,
    pub group_std: f64,
    pub correct: usize,
}

impl AdvantageSet {
    pub fn group_size(&self) -> usize {
        self.advantages.len()
    }

    /// All rollouts agree on correctness.
    pub fn is_zero_variance(&self) -> bool {
        self.correct == 0 || self.correct == self.group_size()
    }

    pub fn is_mixed(&self) -> bool {
        !self.is_zero_variance()
    }
}

/// Standardize total rewards within the group (population std). A group with
/// zero spread gets all-zero advantages.
pub fn group_advantages(group: &RolloutGroup) -> Result<AdvantageSet> {
    let g = group.group_size();
    if g < 2 {
        return Err(Error::InvalidGroup(format!("group size {g} < 2")));
    }
    let n = g as f64;
    let first = group.total_rewards().next().unwrap_or_default();
    let mean = group.total_rewards().sum::<f64>() / n;
    // identical rewards can leave a rounding residue in `mean`; keep them exactly zero-variance
    let std = if group.total_rewards().all(|r| r == first) {
        0.0
    } else {
        (group.total_rewards().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt()
    };
    let advantages = if std > 0.0 {
        group.total_rewards().map(|r| (r - mean) / std).collect()
    } else {
        vec![0.0; g]
    };
    Ok(AdvantageSet {
        advantages,
        empirical_p: group.empirical_p(),
        group_std: std,
        correct: group.correct_count(),
    })
}

/// Analytic `(correct, incorrect)` advantage pair for success probability `p`.
pub fn closed_form_advantages(p: f64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateProbability(p));
    }
    let sd = (p * (1.0 - p)).sqrt();
    Ok(((1.0 - p) / sd, -p / sd))
}

/// Bernoulli reward standard deviation `sqrt(p (1 - p))`, in `[0, 0.5]`.
///
/// Both factors are derived from the half-interval representative
/// `max(p, 1 - p)`, which makes `utility_score(p) == utility_score(1.0 - p)`
/// hold bit-for-bit.
pub fn utility_score(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let hi = if p >= 0.5 { p } else { 1.0 - p };
    ((1.0 - hi) * hi).sqrt()
}

/// A differentiable autoregressive policy over a finite vocabulary.
pub trait PolicyView {
    fn num_params(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn sequence_length(&self) -> usize;

    /// Per-position `log pi(o_t | x, o_<t)` of `seq` given question features.
    fn token_log_probs(&self, features: &[f64], seq: &[usize]) -> Result<Vec<f64>>;

    /// `grad += weight * d/dtheta log pi(o_t | x, o_<t)` for position `t`.
    fn add_token_log_prob_grad(&self, features: &[f64], seq: &[usize], t: usize, weight: f64, grad: &mut [f64]) -> Result<()>;

    fn sequence_log_prob(&self, features: &[f64], seq: &[usize]) -> Result<f64> {
        Ok(self.token_log_probs(features, seq)?.iter().sum())
    }

    fn add_sequence_log_prob_grad(&self, features: &[f64], seq: &[usize], weight: f64, grad: &mut [f64]) -> Result<()> {
        for t in 0..seq.len() {
            self.add_token_log_prob_grad(features, seq, t, weight, grad)?;
        }
        Ok(())
    }
}

/// Token outputs of one group, as sampled from some policy.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SampledGroup {
    pub question_id: u64,
    pub outputs: Vec<Vec<usize>>,
    pub log_probs: Vec<Vec<f64>>,
}

impl SampledGroup {
    pub fn total_tokens(&self) -> usize {
        self.outputs.iter().map(Vec::len).sum()
    }

    fn check_against(&self, policy: &impl PolicyView, adv: &AdvantageSet) -> Result<()> {
        if self.outputs.len() != adv.group_size() {
            return Err(Error::MalformedRollout(format!(
                "{} outputs but {} advantages",
                self.outputs.len(),
                adv.group_size()
            )));
        }
        let v = policy.vocab_size();
        for (i, seq) in self.outputs.iter().enumerate() {
            if let Some(&tok) = seq.iter().find(|&&tok| tok >= v) {
                return Err(Error::MalformedRollout(format!(
                    "rollout {i} has token {tok} outside vocabulary of size {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Grpo,
    Dapo,
    GrpoEntropy,
}

/// What to do with groups whose reward spread is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroStdPolicy {
    #[default]
    ZeroAdvantage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub entropy_beta: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub zero_std_policy: ZeroStdPolicy,
    /// Extra rollout attempts the harness makes to obtain a mixed group for DAPO.
    pub dapo_max_resamples: u32,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Grpo,
            entropy_beta: 0.0003,
            clip_low: 0.2,
            clip_high: 0.28,
            zero_std_policy: ZeroStdPolicy::ZeroAdvantage,
            dapo_max_resamples: 4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("loss.clip_low", self.clip_low), ("loss.clip_high", self.clip_high)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config {
                    key: key.into(),
                    reason: format!("{v} not in (0, 1)"),
                });
            }
        }
        if !(self.entropy_beta >= 0.0 && self.entropy_beta.is_finite()) {
            return Err(Error::Config {
                key: "loss.entropy_beta".into(),
                reason: "must be finite and >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Policy-gradient loss `-(1/G) sum_i sum_t log pi(o_it) A_i` and its exact
/// gradient. Rollouts are assumed to come from `policy` itself (one update
/// iteration, so the importance ratio is identically one).
pub fn grpo_loss_and_gradient(
    policy: &impl PolicyView,
    features: &[f64],
    group: &SampledGroup,
    adv: &AdvantageSet,
) -> Result<(f64, Vec<f64>)> {
    group.check_against(policy, adv)?;
    let g = adv.group_size() as f64;
    let mut grad = vec![0.0; policy.num_params()];
    let mut loss = 0.0;
    for (seq, &a) in group.outputs.iter().zip(&adv.advantages) {
        if a == 0.0 {
            continue;
        }
        loss -= policy.sequence_log_prob(features, seq)? * a / g;
        policy.add_sequence_log_prob_grad(features, seq, -a / g, &mut grad)?;
    }
    Ok((loss, grad))
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Token-mean clipped surrogate for explicit per-token ratios.
pub fn clipped_surrogate(ratios: &[Vec<f64>], advantages: &[f64], cfg: &LossConfig) -> Result<f64> {
    if ratios.len() != advantages.len() {
        return Err(Error::MalformedRollout(format!(
            "{} ratio rows but {} advantages",
            ratios.len(),
            advantages.len()
        )));
    }
    let tokens: usize = ratios.iter().map(Vec::len).sum();
    if tokens == 0 {
        return Err(Error::MalformedRollout("group has no tokens".into()));
    }
    let (lo, hi) = (1.0 - cfg.clip_low, 1.0 + cfg.clip_high);
    let total: f64 = ratios
        .iter()
        .zip(advantages)
        .flat_map(|(row, &a)| row.iter().map(move |&r| (r * a).min(clip(r, lo, hi) * a)))
        .sum();
    Ok(total / tokens as f64)
}

fn require_mixed(adv: &AdvantageSet) -> Result<()> {
    if adv.is_mixed() {
        Ok(())
    } else {
        Err(Error::MixedBatchViolation {
            correct: adv.correct,
            group_size: adv.group_size(),
        })
    }
}

fn ratios(
    new: &impl PolicyView,
    old: &impl PolicyView,
    features: &[f64],
    group: &SampledGroup,
) -> Result<Vec<Vec<f64>>> {
    group
        .outputs
        .iter()
        .map(|seq| {
            let ln = new.token_log_probs(features, seq)?;
            let lo = old.token_log_probs(features, seq)?;
            Ok(ln.iter().zip(&lo).map(|(a, b)| (a - b).exp()).collect())
        })
        .collect()
}

/// DAPO surrogate objective (to be maximized): token-mean over the whole group
/// of `min(r A, clip(r, 1 - eps_low, 1 + eps_high) A)`.
pub fn dapo_loss(
    policy_new: &impl PolicyView,
    policy_old: &impl PolicyView,
    features: &[f64],
    group: &SampledGroup,
    adv: &AdvantageSet,
    cfg: &LossConfig,
) -> Result<f64> {
    require_mixed(adv)?;
    group.check_against(policy_new, adv)?;
    let r = ratios(policy_new, policy_old, features, group)?;
    clipped_surrogate(&r, &adv.advantages, cfg)
}

/// Negated DAPO objective and its gradient with respect to the new policy.
/// Tokens on the clipped side of the min contribute no gradient.
pub fn dapo_descent_gradient(
    policy_new: &impl PolicyView,
    policy_old: &impl PolicyView,
    features: &[f64],
    group: &SampledGroup,
    adv: &AdvantageSet,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    require_mixed(adv)?;
    group.check_against(policy_new, adv)?;
    let r = ratios(policy_new, policy_old, features, group)?;
    let objective = clipped_surrogate(&r, &adv.advantages, cfg)?;
    let tokens = group.total_tokens() as f64;
    let (lo, hi) = (1.0 - cfg.clip_low, 1.0 + cfg.clip_high);
    let mut grad = vec![0.0; policy_new.num_params()];
    for ((seq, row), &a) in group.outputs.iter().zip(&r).zip(&adv.advantages) {
        for (t, &ratio) in row.iter().enumerate() {
            // d(min)/dr is A when the unclipped branch is active, else 0
            let unclipped = ratio * a <= clip(ratio, lo, hi) * a;
            let inside = ratio > lo && ratio < hi;
            if unclipped || inside {
                // d r / d theta = r * d log pi_new
                policy_new.add_token_log_prob_grad(features, seq, t, -a * ratio / tokens, &mut grad)?;
            }
        }
    }
    Ok((-objective, grad))
}

/// Calls `f` with every sequence of the policy's output space.
pub fn for_each_sequence(vocab: usize, len: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut seq = vec![0usize; len];
    loop {
        f(&seq)?;
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            seq[pos] += 1;
            if seq[pos] < vocab {
                break;
            }
            seq[pos] = 0;
        }
    }
}

/// Largest output space that exact enumeration will walk.
pub const MAX_ENUMERATION: usize = 1 << 20;

pub(crate) fn output_space_size(vocab: usize, len: usize) -> Result<usize> {
    let mut n: usize = 1;
    for _ in 0..len {
        n = n
            .checked_mul(vocab)
            .filter(|&n| n <= MAX_ENUMERATION)
            .ok_or_else(|| Error::Unsupported(format!("output space {vocab}^{len} too large to enumerate")))?;
    }
    Ok(n)
}

/// Exact sequence entropy `H(pi(.|x))` and its gradient, by enumeration.
///
/// Training composes this as a bonus: the descent objective is
/// `L_GRPO - beta * H`, so following the negative gradient raises entropy.
pub fn entropy_bonus(policy: &impl PolicyView, features: &[f64]) -> Result<(f64, Vec<f64>)> {
    output_space_size(policy.vocab_size(), policy.sequence_length())?;
    let mut h = 0.0;
    let mut grad = vec![0.0; policy.num_params()];
    for_each_sequence(policy.vocab_size(), policy.sequence_length(), |seq| {
        let lp = policy.sequence_log_prob(features, seq)?;
        let p = lp.exp();
        if p > 0.0 {
            h -= p * lp;
            // dH = -sum_o p_o (log p_o + 1) dlog p_o
            policy.add_sequence_log_prob_grad(features, seq, -p * (lp + 1.0), &mut grad)?;
        }
        Ok(())
    })?;
    Ok((h, grad))
}

/// Exact expectation of the policy-gradient loss gradient over the policy's
/// own output distribution, with the analytic two-valued advantages of the
/// true success probability. Returns `(p, gradient)`; the gradient is all
/// zeros when `p` is 0 or 1.
pub fn expected_grpo_gradient(
    policy: &impl PolicyView,
    features: &[f64],
    is_correct: impl Fn(&[usize]) -> bool,
) -> Result<(f64, Vec<f64>)> {
    output_space_size(policy.vocab_size(), policy.sequence_length())?;
    let mut p = 0.0;
    for_each_sequence(policy.vocab_size(), policy.sequence_length(), |seq| {
        if is_correct(seq) {
            p += policy.sequence_log_prob(features, seq)?.exp();
        }
        Ok(())
    })?;
    let mut grad = vec![0.0; policy.num_params()];
    let Ok((a_pos, a_neg)) = closed_form_advantages(p) else {
        return Ok((p, grad));
    };
    for_each_sequence(policy.vocab_size(), policy.sequence_length(), |seq| {
        let prob = policy.sequence_log_prob(features, seq)?.exp();
        let a = if is_correct(seq) { a_pos } else { a_neg };
        policy.add_sequence_log_prob_grad(features, seq, -prob * a, &mut grad)
    })?;
    Ok((p, grad))
}

/// Loss and gradient for the configured variant. For DAPO the sampling policy
/// serves as the old policy, so ratios start at one.
pub fn variant_loss_and_gradient(
    policy: &impl PolicyView,
    features: &[f64],
    group: &SampledGroup,
    adv: &AdvantageSet,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    match cfg.variant {
        LossVariant::Grpo => grpo_loss_and_gradient(policy, features, group, adv),
        LossVariant::Dapo => {
            if adv.is_zero_variance() {
                return Ok((0.0, vec![0.0; policy.num_params()]));
            }
            dapo_descent_gradient(policy, policy, features, group, adv, cfg)
        }
        LossVariant::GrpoEntropy => {
            let (loss, mut grad) = grpo_loss_and_gradient(policy, features, group, adv)?;
            let (h, hgrad) = entropy_bonus(policy, features)?;
            for (g, hg) in grad.iter_mut().zip(&hgrad) {
                *g -= cfg.entropy_beta * hg;
            }
            Ok((loss - cfg.entropy_beta * h, grad))
        }
    }
}
