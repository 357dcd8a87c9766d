//! Synthetic students standing in for a language-model policy.
//!
//! [`IrtStudent`] answers with probability `sigmoid(a (skill - difficulty))`,
//! which gives closed forms for every success-rate quantity. [`PolicyStudent`]
//! is a linear softmax policy over a small vocabulary trained with exact
//! policy gradients. Both sit behind [`Student`], the interface the harness
//! and protocol client drive.

mod dataset;
mod irt;
mod policy;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

pub use dataset::{generate_dataset, read_dataset, write_dataset, DatasetConfig, DatasetKind, Question, TaskPayload};
pub use irt::{IrtConfig, IrtStudent};
pub use policy::{PolicyConfig, PolicyStudent, TemperedPolicy};

pub use crate::grpo::SampledGroup;
use crate::error::{Error, Result};
use crate::grpo::{group_advantages, AdvantageSet, LossConfig, RewardConfig, RolloutGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentKind {
    Irt,
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentConfig {
    pub kind: StudentKind,
    pub irt: IrtConfig,
    pub policy: PolicyConfig,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            kind: StudentKind::Irt,
            irt: IrtConfig::default(),
            policy: PolicyConfig::default(),
        }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            StudentKind::Irt => self.irt.validate(),
            StudentKind::Policy => self.policy.validate(),
        }
    }

    pub fn build(&self, feature_dim: usize, seed: u64) -> Result<Student> {
        self.validate()?;
        Ok(match self.kind {
            StudentKind::Irt => Student::Irt(IrtStudent::new(&self.irt)),
            StudentKind::Policy => Student::Policy(PolicyStudent::new(&self.policy, feature_dim, seed)?),
        })
    }
}

/// Output of one rollout call.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub group: RolloutGroup,
    pub sampled: SampledGroup,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Student {
    Irt(IrtStudent),
    Policy(PolicyStudent),
}

impl Student {
    pub fn kind(&self) -> StudentKind {
        match self {
            Student::Irt(_) => StudentKind::Irt,
            Student::Policy(_) => StudentKind::Policy,
        }
    }

    /// Probability that one rollout on `q` is verified correct.
    pub fn true_success_prob(&self, q: &Question) -> Result<f64> {
        match self {
            Student::Irt(s) => Ok(s.success_prob(q)),
            Student::Policy(s) => s.success_prob(q),
        }
    }

    /// Sample `g` rollouts. Randomness is keyed by `(seed, step, question id,
    /// attempt, rollout index)`.
    pub fn rollout_group(
        &self,
        q: &Question,
        g: usize,
        step: u64,
        attempt: u32,
        reward_cfg: &RewardConfig,
        seed: u64,
    ) -> Result<Rollout> {
        if g < 2 {
            return Err(Error::InvalidGroup(format!("group size {g} < 2")));
        }
        let (ver, sampled) = match self {
            Student::Irt(s) => (s.sample_rewards(q, g, step, attempt, seed), SampledGroup {
                question_id: q.id,
                outputs: vec![Vec::new(); g],
                log_probs: vec![Vec::new(); g],
            }),
            Student::Policy(s) => s.sample_group(q, g, step, attempt, seed)?,
        };
        let group = RolloutGroup::from_verification(q.id, ver, step, reward_cfg)?;
        Ok(Rollout { group, sampled })
    }

    /// Add one group's gradient to the pending batch; returns the norm of
    /// that group's gradient.
    pub fn accumulate(&mut self, q: &Question, adv: &AdvantageSet, sampled: &SampledGroup, loss: &LossConfig) -> Result<f64> {
        match self {
            Student::Irt(s) => s.accumulate(q, adv, loss),
            Student::Policy(s) => s.accumulate(q, adv, sampled, loss),
        }
    }

    /// Apply and clear the pending batch.
    pub fn apply_update(&mut self) {
        match self {
            Student::Irt(s) => s.apply_update(),
            Student::Policy(s) => s.apply_update(),
        }
    }

    /// Set the student's learning rate (the IRT skill step or the policy lr).
    pub fn set_learn_rate(&mut self, lr: f64) {
        match self {
            Student::Irt(s) => s.learn_rate = lr,
            Student::Policy(s) => s.learn_rate = lr,
        }
    }

    pub fn evaluate(&self, validation: &[Question]) -> Result<f64> {
        if validation.is_empty() {
            return Err(Error::InvalidInput("empty validation set".into()));
        }
        match self {
            Student::Irt(s) => Ok(s.expected_accuracy(validation)),
            Student::Policy(s) => s.accuracy(validation),
        }
    }

    /// Hash of the full parameter state, for no-side-effect checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        match self {
            Student::Irt(s) => {
                s.skill.to_bits().hash(&mut h);
                s.pending.to_bits().hash(&mut h);
            }
            Student::Policy(s) => {
                for w in s.weights() {
                    w.to_bits().hash(&mut h);
                }
            }
        }
        h.finish()
    }
}

/// One-item update: accumulate the group's gradient and step immediately
/// with learning rate `lr`. Returns the gradient norm.
pub fn student_update(
    student: &mut Student,
    q: &Question,
    adv: &AdvantageSet,
    sampled: &SampledGroup,
    lr: f64,
    loss: &LossConfig,
) -> Result<f64> {
    student.set_learn_rate(lr);
    let norm = student.accumulate(q, adv, sampled, loss)?;
    student.apply_update();
    Ok(norm)
}

/// Convenience: rollouts plus their advantages.
pub fn rollout_with_advantages(
    student: &Student,
    q: &Question,
    g: usize,
    step: u64,
    attempt: u32,
    reward_cfg: &RewardConfig,
    seed: u64,
) -> Result<(Rollout, AdvantageSet)> {
    let r = student.rollout_group(q, g, step, attempt, reward_cfg, seed)?;
    let adv = group_advantages(&r.group)?;
    Ok((r, adv))
}
