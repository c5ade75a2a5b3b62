//! Memory-aware machine teaching for linear learners.
//!
//! A learner keeps a logistic-regression concept and a decaying momentum of
//! past gradients. A teacher repeatedly picks an example from a pool, asks the
//! learner for its label, reveals the truth, and lets the learner update.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod harmonic;
pub mod linalg;
pub mod memory;
pub mod model;
pub mod objective;
pub mod rng;
pub mod target;
pub mod teacher;

pub use error::{Error, Result};
pub use harmonic::{HarmonicEstimate, Sparsity};
pub use memory::{estimate_beta, score_trial, teaching_budget, MemoryProfile, SortingRound, SortingTrial};
pub use model::{
    incorrect_prob, learner_predict, learner_update, logistic_loss, loss_gradient, memory_window, Concept,
    EtaSchedule, Example, Label, LearnerState, TeachingEvent, TeachingPool,
};
pub use objective::{jedi_score, MomentumTerm, TeacherContext};
pub use rng::{step_rng, stream_rng, Stream};
pub use teacher::{run_teaching, Recommendation, Teacher, TeacherKind, TeacherVariant, TeachingEnv, TeachingRun};
