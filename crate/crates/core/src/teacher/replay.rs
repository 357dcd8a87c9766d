use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grpo::{utility_score, RolloutGroup};
use crate::students::Question;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySample {
    pub question_id: u64,
    pub features: Vec<f64>,
    /// Empirical reward standard deviation `sqrt(p (1 - p))` of the group.
    pub target: f64,
    pub inserted_at: u64,
}

/// Sliding window of the most recent `capacity` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    samples: VecDeque<ReplaySample>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            samples: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplaySample> {
        self.samples.iter()
    }

    pub fn get(&self, i: usize) -> Option<&ReplaySample> {
        self.samples.get(i)
    }

    /// Append and evict the oldest sample when over capacity.
    pub fn push(&mut self, sample: ReplaySample) -> Option<ReplaySample> {
        self.samples.push_back(sample);
        if self.samples.len() > self.capacity {
            self.samples.pop_front()
        } else {
            None
        }
    }
}

/// Build the regression sample for one feedback record.
pub fn replay_sample(q: &Question, group: &RolloutGroup, inserted_at: u64) -> ReplaySample {
    ReplaySample {
        question_id: q.id,
        features: q.features.clone(),
        target: utility_score(group.empirical_p()),
        inserted_at,
    }
}

/// Push the feedback for `q` into `buffer`; returns the evicted sample, if any.
pub fn record_feedback(buffer: &mut ReplayBuffer, q: &Question, group: &RolloutGroup, inserted_at: u64) -> Option<ReplaySample> {
    buffer.push(replay_sample(q, group, inserted_at))
}
