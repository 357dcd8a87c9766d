use std::sync::Arc;

use log::{debug, info};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{MetricsRecord, MetricsWriter};
use crate::error::{Error, Result};
use crate::grpo::{group_advantages, LossVariant};
use crate::protocol::{Client, SampleReply, Session, TeacherService, TeacherStats};
use crate::rng::{self, domain};
use crate::students::{Question, Student};
use crate::teacher::Teacher;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Goldilocks,
    Baseline,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "goldilocks" => Ok(Mode::Goldilocks),
            "baseline" => Ok(Mode::Baseline),
            other => Err(Error::InvalidInput(format!("unknown mode `{other}` (goldilocks | baseline)"))),
        }
    }
}

/// A served question plus the teacher's view of it, if a teacher chose it.
#[derive(Debug, Clone, PartialEq)]
pub struct Served {
    pub question: Question,
    pub stats: Option<TeacherStats>,
}

impl From<SampleReply> for Served {
    fn from(r: SampleReply) -> Self {
        Self { question: r.question, stats: Some(r.stats) }
    }
}

/// Where the next training question comes from.
pub trait CurriculumSource {
    fn next_sample(&mut self, step: u64) -> Result<Served>;
    fn feedback(&mut self, question_id: u64, rewards_ver: &[u8]) -> Result<()>;
    /// Calls made into a teacher so far.
    fn teacher_calls(&self) -> u64;
}

/// The teacher service driven directly, with one session.
pub struct InProcessTeacher {
    pub service: TeacherService,
    pub session: Session,
}

impl InProcessTeacher {
    pub fn new(service: TeacherService) -> Self {
        Self { service, session: Session::new(0) }
    }
}

impl CurriculumSource for InProcessTeacher {
    fn next_sample(&mut self, _step: u64) -> Result<Served> {
        self.service.sample(&mut self.session).map(Served::from)
    }

    fn feedback(&mut self, question_id: u64, rewards_ver: &[u8]) -> Result<()> {
        self.service.accept_feedback(&mut self.session, question_id, rewards_ver)?;
        self.service.run_update()
    }

    fn teacher_calls(&self) -> u64 {
        self.service.calls()
    }
}

/// Uniform sampling with replacement; no teacher anywhere.
pub struct UniformSource {
    dataset: Arc<[Question]>,
    seed: u64,
}

impl UniformSource {
    pub fn new(dataset: Arc<[Question]>, seed: u64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidSize("empty training set".into()));
        }
        Ok(Self { dataset, seed })
    }
}

impl CurriculumSource for UniformSource {
    fn next_sample(&mut self, step: u64) -> Result<Served> {
        let i = rng::stream(self.seed, &[domain::BASELINE, step]).gen_range(0..self.dataset.len());
        Ok(Served { question: self.dataset[i].clone(), stats: None })
    }

    fn feedback(&mut self, _question_id: u64, _rewards_ver: &[u8]) -> Result<()> {
        Ok(())
    }

    fn teacher_calls(&self) -> u64 {
        0
    }
}

/// A teacher server reached over the wire.
pub struct RemoteTeacher {
    pub client: Client,
    calls: u64,
}

impl RemoteTeacher {
    pub fn new(client: Client) -> Self {
        Self { client, calls: 0 }
    }
}

impl CurriculumSource for RemoteTeacher {
    fn next_sample(&mut self, _step: u64) -> Result<Served> {
        self.calls += 1;
        self.client.request_sample().map(Served::from)
    }

    fn feedback(&mut self, question_id: u64, rewards_ver: &[u8]) -> Result<()> {
        self.calls += 1;
        self.client.send_feedback(question_id, rewards_ver).map(|_| ())
    }

    fn teacher_calls(&self) -> u64 {
        self.calls
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub mode: Mode,
    pub records: Vec<MetricsRecord>,
    pub teacher_calls: u64,
}

/// Everything a run needs besides its question source.
pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub training: Arc<[Question]>,
    pub validation: Vec<Question>,
}

impl RunContext {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            training: Arc::from(cfg.dataset.training()?),
            validation: cfg.dataset.validation()?,
        })
    }

    pub fn student(&self) -> Result<Student> {
        self.cfg.student.build(self.cfg.dataset.feature_dim, self.cfg.seeds.student)
    }

    /// Teacher wrapped as a service over the training set.
    pub fn teacher_service(&self) -> Result<TeacherService> {
        let teacher = Teacher::new(&self.cfg.teacher, self.cfg.dataset.feature_dim, self.cfg.seeds.teacher)?
            .with_selection_seed(self.cfg.seeds.selection);
        TeacherService::new(teacher, Arc::clone(&self.training), self.cfg.group_size)
    }

    pub fn uniform_source(&self) -> Result<UniformSource> {
        UniformSource::new(Arc::clone(&self.training), self.cfg.seeds.selection)
    }
}

/// Run `cfg.total_steps` selected prompts through `student`.
///
/// The student only changes after the source has acknowledged feedback, so
/// a transport failure mid-step leaves it untouched.
pub fn run_with_source(
    ctx: &RunContext,
    student: &mut Student,
    source: &mut dyn CurriculumSource,
    mut sink: Option<&mut MetricsWriter>,
) -> Result<Vec<MetricsRecord>> {
    let cfg = &ctx.cfg;
    let g = cfg.group_size;
    let mut records = Vec::with_capacity(cfg.total_steps as usize);
    for step in 1..=cfg.total_steps {
        let Served { question: q, stats } = source.next_sample(step)?;
        let mut attempt = 0u32;
        let mut rollout = student.rollout_group(&q, g, step, attempt, &cfg.reward, cfg.seeds.student)?;
        if cfg.loss.variant == LossVariant::Dapo {
            while !is_mixed(&rollout.group.rewards_ver) && attempt < cfg.loss.dapo_max_resamples {
                attempt += 1;
                rollout = student.rollout_group(&q, g, step, attempt, &cfg.reward, cfg.seeds.student)?;
            }
        }
        source.feedback(q.id, &rollout.group.rewards_ver)?;

        let adv = group_advantages(&rollout.group)?;
        let grad_norm = student.accumulate(&q, &adv, &rollout.sampled, &cfg.loss)?;
        if step % cfg.batch_size as u64 == 0 || step == cfg.total_steps {
            student.apply_update();
        }
        let validation_accuracy = if step % cfg.eval_every == 0 || step == cfg.total_steps {
            let acc = student.evaluate(&ctx.validation)?;
            debug!("step {step}: validation accuracy {acc:.4}");
            Some(acc)
        } else {
            None
        };
        let totals = rollout.group.total_rewards();
        let record = MetricsRecord {
            step,
            question_id: q.id,
            mean_reward: totals.sum::<f64>() / g as f64,
            reward_std: adv.group_std,
            zero_variance_flag: u8::from(adv.is_zero_variance()),
            grad_norm,
            resamples: attempt,
            teacher_mu: stats.as_ref().map(|s| s.mu),
            teacher_sigma: stats.as_ref().map(|s| s.sigma),
            teacher_version: stats.as_ref().map(|s| s.model_version),
            teacher_val_mae: stats.and_then(|s| s.update).and_then(|u| u.unseen_mae),
            validation_accuracy,
        };
        if let Some(w) = sink.as_deref_mut() {
            w.write(&record)?;
        }
        records.push(record);
    }
    Ok(records)
}

fn is_mixed(rewards: &[u8]) -> bool {
    let k = rewards.iter().filter(|&&r| r == 1).count();
    k > 0 && k < rewards.len()
}

/// Run one arm in-process. The baseline never constructs a teacher.
pub fn run_experiment(cfg: &ExperimentConfig, mode: Mode) -> Result<RunOutput> {
    run_experiment_to(cfg, mode, None)
}

pub fn run_experiment_to(cfg: &ExperimentConfig, mode: Mode, sink: Option<&mut MetricsWriter>) -> Result<RunOutput> {
    let ctx = RunContext::new(cfg)?;
    let mut student = ctx.student()?;
    info!("running {mode:?} arm for {} steps", cfg.total_steps);
    let (records, teacher_calls) = match mode {
        Mode::Goldilocks => {
            let mut src = InProcessTeacher::new(ctx.teacher_service()?);
            let r = run_with_source(&ctx, &mut student, &mut src, sink)?;
            (r, src.teacher_calls())
        }
        Mode::Baseline => {
            let mut src = ctx.uniform_source()?;
            let r = run_with_source(&ctx, &mut student, &mut src, sink)?;
            (r, src.teacher_calls())
        }
    };
    Ok(RunOutput { mode, records, teacher_calls })
}
