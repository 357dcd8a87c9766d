use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Question;
use crate::error::{Error, Result};
use crate::grpo::{self, AdvantageSet, LossConfig, PolicyView, SampledGroup};
use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub vocab_size: usize,
    pub sequence_length: usize,
    pub temperature_train: f64,
    /// 0 means greedy decoding.
    pub temperature_eval: f64,
    pub learn_rate: f64,
    pub init_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            vocab_size: 10,
            sequence_length: 1,
            temperature_train: 0.7,
            temperature_eval: 0.0,
            learn_rate: 0.5,
            init_scale: 0.01,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::Config { key: format!("student.policy.{key}"), reason: reason.into() });
        if self.vocab_size < 2 {
            return bad("vocab_size", "must be >= 2");
        }
        if self.sequence_length == 0 {
            return bad("sequence_length", "must be >= 1");
        }
        if !(self.temperature_train > 0.0) {
            return bad("temperature_train", "must be > 0");
        }
        if !(self.temperature_eval >= 0.0) {
            return bad("temperature_eval", "must be >= 0");
        }
        if !(self.learn_rate >= 0.0) {
            return bad("learn_rate", "must be >= 0");
        }
        Ok(())
    }
}

/// Linear softmax policy over `V` tokens, decoded left to right.
///
/// The context at position `t` is `[features, one_hot(o_{t-1}), 1]` (the
/// previous-token block is zero at `t = 0`), and the logits are
/// `W^T context / temperature` with `W` of shape `(F + V + 1) x V`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStudent {
    weights: Vec<f64>,
    feature_dim: usize,
    vocab: usize,
    seq_len: usize,
    pub temperature_train: f64,
    pub temperature_eval: f64,
    pub learn_rate: f64,
    grad_sum: Vec<f64>,
    grad_count: usize,
}

impl PolicyStudent {
    pub fn new(cfg: &PolicyConfig, feature_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let rows = feature_dim + cfg.vocab_size + 1;
        let mut r = rng::stream(seed, &[domain::STUDENT_INIT]);
        let weights = (0..rows * cfg.vocab_size)
            .map(|_| r.sample::<f64, _>(StandardNormal) * cfg.init_scale)
            .collect::<Vec<_>>();
        let n = weights.len();
        Ok(Self {
            weights,
            feature_dim,
            vocab: cfg.vocab_size,
            seq_len: cfg.sequence_length,
            temperature_train: cfg.temperature_train,
            temperature_eval: cfg.temperature_eval,
            learn_rate: cfg.learn_rate,
            grad_sum: vec![0.0; n],
            grad_count: 0,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.weights.len() {
            return Err(Error::Shape { expected: self.weights.len(), got: w.len() });
        }
        self.weights.copy_from_slice(w);
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn rows(&self) -> usize {
        self.feature_dim + self.vocab + 1
    }

    pub fn at_temperature(&self, temperature: f64) -> TemperedPolicy<'_> {
        TemperedPolicy { student: self, temperature }
    }

    fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(Error::Shape { expected: self.feature_dim, got: features.len() });
        }
        Ok(())
    }

    /// Raw (untempered) logits at position `t` given the previous token.
    fn logits(&self, features: &[f64], prev: Option<usize>) -> Vec<f64> {
        let v = self.vocab;
        let mut z = self.weights[(self.rows() - 1) * v..].to_vec();
        for (i, &f) in features.iter().enumerate() {
            if f != 0.0 {
                for (zj, wj) in z.iter_mut().zip(&self.weights[i * v..(i + 1) * v]) {
                    *zj += f * wj;
                }
            }
        }
        if let Some(p) = prev {
            let row = self.feature_dim + p;
            for (zj, wj) in z.iter_mut().zip(&self.weights[row * v..(row + 1) * v]) {
                *zj += wj;
            }
        }
        z
    }

    fn log_softmax(&self, features: &[f64], prev: Option<usize>, temperature: f64) -> Vec<f64> {
        let z: Vec<f64> = self.logits(features, prev).iter().map(|x| x / temperature).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        z.iter().map(|x| x - lse).collect()
    }

    fn answer<'q>(&self, q: &'q Question) -> Result<&'q [usize]> {
        let ans = q
            .answer()
            .ok_or_else(|| Error::Unsupported(format!("question {} has no answer key for a policy student", q.id)))?;
        if ans.len() != self.seq_len {
            return Err(Error::Shape { expected: self.seq_len, got: ans.len() });
        }
        Ok(ans)
    }

    /// Exact probability of emitting the answer key at the sampling temperature.
    pub fn success_prob(&self, q: &Question) -> Result<f64> {
        self.check_features(&q.features)?;
        let ans = self.answer(q)?;
        Ok(self.sequence_log_prob(&q.features, ans)?.exp())
    }

    pub(super) fn sample_group(&self, q: &Question, g: usize, step: u64, attempt: u32, seed: u64) -> Result<(Vec<u8>, SampledGroup)> {
        self.check_features(&q.features)?;
        let ans = self.answer(q)?.to_vec();
        let mut outputs = Vec::with_capacity(g);
        let mut log_probs = Vec::with_capacity(g);
        for i in 0..g as u64 {
            let mut r = rng::stream(seed, &[domain::ROLLOUT, step, q.id, u64::from(attempt), i]);
            let mut seq = Vec::with_capacity(self.seq_len);
            let mut lps = Vec::with_capacity(self.seq_len);
            for _ in 0..self.seq_len {
                let lp = self.log_softmax(&q.features, seq.last().copied(), self.temperature_train);
                let u: f64 = r.gen();
                let mut acc = 0.0;
                let mut tok = self.vocab - 1;
                for (j, l) in lp.iter().enumerate() {
                    acc += l.exp();
                    if u < acc {
                        tok = j;
                        break;
                    }
                }
                seq.push(tok);
                lps.push(lp[tok]);
            }
            outputs.push(seq);
            log_probs.push(lps);
        }
        let ver = outputs.iter().map(|o| u8::from(o == &ans)).collect();
        Ok((ver, SampledGroup { question_id: q.id, outputs, log_probs }))
    }

    /// Greedy decode; ties go to the smallest token.
    pub fn greedy(&self, features: &[f64]) -> Result<Vec<usize>> {
        self.check_features(features)?;
        let mut seq = Vec::with_capacity(self.seq_len);
        for _ in 0..self.seq_len {
            let z = self.logits(features, seq.last().copied());
            let mut best = 0;
            for (j, &x) in z.iter().enumerate() {
                if x > z[best] {
                    best = j;
                }
            }
            seq.push(best);
        }
        Ok(seq)
    }

    /// Greedy accuracy when `temperature_eval == 0`, otherwise the exact
    /// expected accuracy at `temperature_eval`.
    pub fn accuracy(&self, validation: &[Question]) -> Result<f64> {
        let mut total = 0.0;
        for q in validation {
            let ans = self.answer(q)?;
            total += if self.temperature_eval == 0.0 {
                f64::from(u8::from(self.greedy(&q.features)? == ans))
            } else {
                self.at_temperature(self.temperature_eval).sequence_log_prob(&q.features, ans)?.exp()
            };
        }
        Ok(total / validation.len() as f64)
    }

    pub(super) fn accumulate(&mut self, q: &Question, adv: &AdvantageSet, sampled: &SampledGroup, loss: &LossConfig) -> Result<f64> {
        self.check_features(&q.features)?;
        let (_, grad) = grpo::variant_loss_and_gradient(&*self, &q.features, sampled, adv, loss)?;
        for (s, g) in self.grad_sum.iter_mut().zip(&grad) {
            *s += g;
        }
        self.grad_count += 1;
        Ok(grad.iter().map(|g| g * g).sum::<f64>().sqrt())
    }

    /// Step on the mean of the accumulated gradients.
    pub(super) fn apply_update(&mut self) {
        if self.grad_count == 0 {
            return;
        }
        let scale = self.learn_rate / self.grad_count as f64;
        for (w, g) in self.weights.iter_mut().zip(self.grad_sum.iter_mut()) {
            *w -= scale * *g;
            *g = 0.0;
        }
        self.grad_count = 0;
    }

    /// Copy whose first-position answer logit is shifted so that the answer is
    /// sampled with probability exactly `p` (single-token policies only). Only
    /// the answer logit moves, so the shape of the incorrect-token
    /// distribution is unchanged.
    pub fn with_success_prob(&self, q: &Question, p: f64) -> Result<Self> {
        if self.seq_len != 1 {
            return Err(Error::Unsupported("success-probability calibration needs sequence_length = 1".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::DegenerateProbability(p));
        }
        self.check_features(&q.features)?;
        let c = self.answer(q)?[0];
        let tau = self.temperature_train;
        let z: Vec<f64> = self.logits(&q.features, None).iter().map(|x| x / tau).collect();
        let rest: f64 = z.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, x)| x.exp()).sum();
        let target = (p * rest / (1.0 - p)).ln();
        let mut out = self.clone();
        let bias = (self.rows() - 1) * self.vocab + c;
        out.weights[bias] += (target - z[c]) * tau;
        Ok(out)
    }
}

/// A [`PolicyStudent`] viewed at a fixed temperature.
#[derive(Debug, Clone, Copy)]
pub struct TemperedPolicy<'a> {
    student: &'a PolicyStudent,
    temperature: f64,
}

fn token_log_probs_at(s: &PolicyStudent, tau: f64, features: &[f64], seq: &[usize]) -> Result<Vec<f64>> {
    s.check_features(features)?;
    if let Some(&tok) = seq.iter().find(|&&t| t >= s.vocab) {
        return Err(Error::MalformedRollout(format!("token {tok} outside vocabulary of size {}", s.vocab)));
    }
    Ok(seq
        .iter()
        .enumerate()
        .map(|(t, &o)| s.log_softmax(features, if t == 0 { None } else { Some(seq[t - 1]) }, tau)[o])
        .collect())
}

fn add_grad_at(s: &PolicyStudent, tau: f64, features: &[f64], seq: &[usize], t: usize, weight: f64, grad: &mut [f64]) -> Result<()> {
    s.check_features(features)?;
    if seq[t] >= s.vocab {
        return Err(Error::MalformedRollout(format!("token {} outside vocabulary of size {}", seq[t], s.vocab)));
    }
    let v = s.vocab;
    let prev = if t == 0 { None } else { Some(seq[t - 1]) };
    let lp = s.log_softmax(features, prev, tau);
    // d log pi(o_t) / d logit_j = (1[j = o_t] - pi_j) / tau
    let dz: Vec<f64> = lp
        .iter()
        .enumerate()
        .map(|(j, l)| weight * ((if j == seq[t] { 1.0 } else { 0.0 }) - l.exp()) / tau)
        .collect();
    let mut add_row = |row: usize, x: f64| {
        for (g, d) in grad[row * v..(row + 1) * v].iter_mut().zip(&dz) {
            *g += x * d;
        }
    };
    for (i, &f) in features.iter().enumerate() {
        if f != 0.0 {
            add_row(i, f);
        }
    }
    if let Some(p) = prev {
        add_row(s.feature_dim + p, 1.0);
    }
    add_row(s.rows() - 1, 1.0);
    Ok(())
}

impl PolicyView for TemperedPolicy<'_> {
    fn num_params(&self) -> usize {
        self.student.weights.len()
    }
    fn vocab_size(&self) -> usize {
        self.student.vocab
    }
    fn sequence_length(&self) -> usize {
        self.student.seq_len
    }
    fn token_log_probs(&self, features: &[f64], seq: &[usize]) -> Result<Vec<f64>> {
        token_log_probs_at(self.student, self.temperature, features, seq)
    }
    fn add_token_log_prob_grad(&self, features: &[f64], seq: &[usize], t: usize, weight: f64, grad: &mut [f64]) -> Result<()> {
        add_grad_at(self.student, self.temperature, features, seq, t, weight, grad)
    }
}

/// The sampling policy (training temperature).
impl PolicyView for PolicyStudent {
    fn num_params(&self) -> usize {
        self.weights.len()
    }
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn sequence_length(&self) -> usize {
        self.seq_len
    }
    fn token_log_probs(&self, features: &[f64], seq: &[usize]) -> Result<Vec<f64>> {
        token_log_probs_at(self, self.temperature_train, features, seq)
    }
    fn add_token_log_prob_grad(&self, features: &[f64], seq: &[usize], t: usize, weight: f64, grad: &mut [f64]) -> Result<()> {
        add_grad_at(self, self.temperature_train, features, seq, t, weight, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::{entropy_bonus, grpo_loss_and_gradient, group_advantages, RewardConfig, RolloutGroup};
    use crate::students::{DatasetConfig, DatasetKind, Student};

    fn dataset(t: usize) -> Vec<Question> {
        DatasetConfig {
            kind: DatasetKind::Arithmetic,
            feature_dim: 6,
            vocab_size: 4,
            sequence_length: t,
            ..DatasetConfig::default()
        }
        .generate_range(0, 20)
        .unwrap()
    }

    fn student(t: usize, scale: f64, seed: u64) -> PolicyStudent {
        let cfg = PolicyConfig { vocab_size: 4, sequence_length: t, init_scale: scale, ..PolicyConfig::default() };
        PolicyStudent::new(&cfg, 6, seed).unwrap()
    }

    #[test]
    fn distributions_are_normalized() {
        let s = student(2, 1.0, 3);
        for q in dataset(2) {
            for prev in [None, Some(0), Some(3)] {
                let total: f64 = s.log_softmax(&q.features, prev, 0.7).iter().map(|l| l.exp()).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
            let mut mass = 0.0;
            grpo::for_each_sequence(4, 2, |seq| {
                mass += s.sequence_log_prob(&q.features, seq)?.exp();
                Ok(())
            })
            .unwrap();
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_groups_have_declared_shape() {
        let s = student(3, 0.5, 1);
        let q = &dataset(3)[0];
        let (ver, g) = s.sample_group(q, 5, 0, 0, 9).unwrap();
        assert_eq!(ver.len(), 5);
        assert_eq!(g.outputs.len(), 5);
        assert!(g.outputs.iter().all(|o| o.len() == 3));
        for (o, lp) in g.outputs.iter().zip(&g.log_probs) {
            let want = s.token_log_probs(&q.features, o).unwrap();
            assert_eq!(lp, &want);
        }
        let (ver2, g2) = s.sample_group(q, 5, 0, 0, 9).unwrap();
        assert_eq!((ver, g), (ver2, g2));
    }

    #[test]
    fn success_prob_matches_monte_carlo() {
        let s = student(1, 1.0, 4);
        let q = &dataset(1)[2];
        let p = s.success_prob(q).unwrap();
        let n = 100_000usize;
        let (ver, _) = s.sample_group(q, n, 0, 0, 21).unwrap();
        let mc = ver.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((mc - p).abs() < 3.0 * se, "mc {mc} exact {p}");
    }

    #[test]
    fn greedy_and_sampled_accuracy_on_a_calibrated_item() {
        let qs = dataset(1);
        let mut s = student(1, 0.0, 0);
        let q = &qs[0];
        s = s.with_success_prob(q, 0.999).unwrap();
        assert_eq!(s.accuracy(std::slice::from_ref(q)).unwrap(), 1.0);
        s.temperature_eval = 0.7;
        let acc = s.accuracy(std::slice::from_ref(q)).unwrap();
        assert!((acc - 0.999).abs() < 1e-12);
    }

    fn fd(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        let mut p = x.to_vec();
        (0..x.len())
            .map(|i| {
                let o = p[i];
                p[i] = o + h;
                let a = f(&p);
                p[i] = o - h;
                let b = f(&p);
                p[i] = o;
                (a - b) / (2.0 * h)
            })
            .collect()
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let n = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        d / n.max(1e-300)
    }

    #[test]
    fn grpo_gradient_matches_finite_differences() {
        for t in [1, 2] {
            for seed in 0..5 {
                let s = student(t, 0.8, seed);
                let q = &dataset(t)[seed as usize];
                let (ver, g) = s.sample_group(q, 8, seed, 0, 100 + seed).unwrap();
                let mut ver = ver;
                ver[0] = 1 - ver[0];
                let adv = group_advantages(&RolloutGroup::new(q.id, ver, vec![0.0; 8]).unwrap()).unwrap();
                let (_, grad) = grpo_loss_and_gradient(&s, &q.features, &g, &adv).unwrap();
                let f = |w: &[f64]| {
                    let mut c = s.clone();
                    c.set_weights(w).unwrap();
                    grpo_loss_and_gradient(&c, &q.features, &g, &adv).unwrap().0
                };
                assert!(rel(&grad, &fd(f, s.weights())) < 1e-6);
            }
        }
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let s = student(2, 0.8, 7);
        let q = &dataset(2)[1];
        let (_, grad) = entropy_bonus(&s, &q.features).unwrap();
        let f = |w: &[f64]| {
            let mut c = s.clone();
            c.set_weights(w).unwrap();
            entropy_bonus(&c, &q.features).unwrap().0
        };
        assert!(rel(&grad, &fd(f, s.weights())) < 1e-6);
    }

    #[test]
    fn descent_step_lowers_the_group_loss() {
        let mut st = Student::Policy(student(1, 0.3, 2));
        let qs = dataset(1);
        let Student::Policy(s) = &st else { unreachable!() };
        let s0 = s.clone();
        let q = &qs[3];
        let r = st.rollout_group(q, 16, 0, 0, &RewardConfig::default(), 5).unwrap();
        let mut ver = r.group.rewards_ver.clone();
        ver[0] = 1 - ver[0];
        let adv = group_advantages(&RolloutGroup::new(q.id, ver, vec![0.0; 16]).unwrap()).unwrap();
        let before = grpo_loss_and_gradient(&s0, &q.features, &r.sampled, &adv).unwrap().0;
        crate::students::student_update(&mut st, q, &adv, &r.sampled, 0.01, &LossConfig::default()).unwrap();
        let Student::Policy(s1) = &st else { unreachable!() };
        let after = grpo_loss_and_gradient(s1, &q.features, &r.sampled, &adv).unwrap().0;
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn calibration_hits_target_probability() {
        let s = student(1, 1.0, 8);
        let q = &dataset(1)[4];
        for p in [0.1, 0.37, 0.5, 0.9] {
            let c = s.with_success_prob(q, p).unwrap();
            assert!((c.success_prob(q).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_irt_questions_and_bad_shapes() {
        let s = student(1, 1.0, 8);
        let q = Question { id: 0, features: vec![0.0; 6], difficulty: 0.0, payload: crate::students::TaskPayload::Irt };
        assert!(matches!(s.success_prob(&q), Err(Error::Unsupported(_))));
        let q = Question { features: vec![0.0; 3], ..dataset(1)[0].clone() };
        assert!(matches!(s.success_prob(&q), Err(Error::Shape { .. })));
    }
}
