use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::RolloutGroup;
use crate::students::Question;
use crate::teacher::{Teacher, UpdateReport};

/// Per-connection bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: u64,
    pub samples_served: u64,
    pub feedback_received: u64,
    /// Served question ids still awaiting feedback.
    pub pending: BTreeSet<u64>,
}

impl Session {
    pub fn new(id: u64) -> Self {
        Self { id, ..Self::default() }
    }

    pub fn counters(&self) -> Counters {
        Counters {
            samples_served: self.samples_served,
            feedback_received: self.feedback_received,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub samples_served: u64,
    pub feedback_received: u64,
}

/// Teacher-side statistics attached to every served sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherStats {
    /// Mean predicted utility over the candidate pool.
    pub mu: f64,
    /// Population std of predicted utility over the candidate pool.
    pub sigma: f64,
    /// Number of refinement passes the selecting model had seen.
    pub model_version: u64,
    pub explored: bool,
    /// Report of the refinement that ran since the previous sample, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<UpdateReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleReply {
    pub question: Question,
    pub stats: TeacherStats,
}

/// The teacher actor's state machine, independent of transport. The server
/// drives one instance from its actor thread; the in-process harness drives
/// one directly.
#[derive(Debug)]
pub struct TeacherService {
    teacher: Teacher,
    dataset: Arc<[Question]>,
    index: HashMap<u64, usize>,
    group_size: usize,
    last_report: Option<UpdateReport>,
    calls: u64,
}

impl TeacherService {
    pub fn new(teacher: Teacher, dataset: Arc<[Question]>, group_size: usize) -> Result<Self> {
        if group_size < 2 {
            return Err(Error::InvalidGroup(format!("group size {group_size} < 2")));
        }
        let index = dataset.iter().enumerate().map(|(i, q)| (q.id, i)).collect();
        Ok(Self {
            teacher,
            dataset,
            index,
            group_size,
            last_report: None,
            calls: 0,
        })
    }

    pub fn teacher(&self) -> &Teacher {
        &self.teacher
    }

    pub fn into_teacher(self) -> Teacher {
        self.teacher
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Total selection and feedback calls handled.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn sample(&mut self, session: &mut Session) -> Result<SampleReply> {
        let model_version = self.teacher.version();
        let sel = self.teacher.select(&self.dataset)?;
        self.calls += 1;
        session.samples_served += 1;
        session.pending.insert(sel.question_id);
        Ok(SampleReply {
            question: self.dataset[sel.index].clone(),
            stats: TeacherStats {
                mu: sel.prediction_mean,
                sigma: sel.prediction_std,
                model_version,
                explored: sel.explored,
                update: self.last_report.take(),
            },
        })
    }

    /// Validate and record feedback. The refinement pass is deferred to
    /// [`TeacherService::run_update`] so a server can acknowledge first.
    pub fn accept_feedback(&mut self, session: &mut Session, question_id: u64, rewards: &[u8]) -> Result<()> {
        if rewards.len() != self.group_size {
            return Err(Error::InvalidGroup(format!(
                "expected {} rewards, got {}",
                self.group_size,
                rewards.len()
            )));
        }
        if !session.pending.contains(&question_id) {
            return Err(Error::UnknownQuestion(question_id));
        }
        let &i = self.index.get(&question_id).ok_or(Error::UnknownQuestion(question_id))?;
        let group = RolloutGroup::new(question_id, rewards.to_vec(), vec![0.0; rewards.len()])?;
        self.teacher.record(&self.dataset[i], &group);
        self.calls += 1;
        session.pending.remove(&question_id);
        session.feedback_received += 1;
        Ok(())
    }

    pub fn run_update(&mut self) -> Result<()> {
        if let Some(report) = self.teacher.maybe_update()? {
            if let Some(w) = &report.warning {
                log::warn!("teacher update {}: {w}", report.version);
            }
            self.last_report = Some(report);
        }
        Ok(())
    }
}
