//! Teacher-driven curriculum selection for group-relative policy optimization.
//!
//! A teacher regresses the reward standard deviation `sqrt(p (1 - p))` of each
//! question for the current student and picks training prompts with an
//! epsilon-greedy rule over small candidate pools. Two synthetic students make
//! every quantity checkable: an item-response student with closed-form success
//! probabilities, and a small softmax policy trained with real gradients.
//!
//! Module map:
//! - [`grpo`]: rewards, group advantages, GRPO / DAPO / entropy losses.
//! - [`students`]: question generators, the two student backends, rollouts.
//! - [`teacher`]: utility predictor, selection, replay buffer, online refinement.
//! - [`protocol`]: line-framed teacher server and student client.
//! - [`harness`]: experiment loop, metrics, compute-normalized comparison, reports.

pub mod error;
pub mod grpo;
pub mod harness;
pub mod protocol;
pub mod rng;
pub mod students;
pub mod teacher;

pub use error::{Error, Result};
