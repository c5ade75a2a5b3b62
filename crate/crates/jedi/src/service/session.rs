//! Session state machine. Every change is an event; state is the fold of its
//! events, so a session rebuilt from its log equals the live one.

use std::collections::HashSet;

use jedi_core::memory::{estimate_beta, score_trial, teaching_budget, SortingTrial, MAX_SET_SIZE, MIN_SET_SIZE, TRIALS};
use jedi_core::model::{EtaSchedule, Label, ShownExample, TeachingEvent};
use jedi_core::rng::{stream_rng, Stream};
use jedi_core::teacher::{Recommendation, Teacher, TeacherKind, TeacherVariant, HUMAN_COLD_START};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::registry::DatasetEntry;
use super::ServiceError;

/// Teaching budget for the memoryless teachers, whatever the learner's memory.
pub const FIXED_BUDGET: usize = 30;
pub const DEFAULT_EVAL_PER_CLASS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceTeacher {
    #[default]
    Jedi,
    Imt,
    Rt,
}

impl ServiceTeacher {
    pub fn variant(self) -> TeacherVariant {
        match self {
            ServiceTeacher::Jedi => TeacherVariant::JediHarmonic,
            ServiceTeacher::Imt => TeacherVariant::ImtHarmonic,
            ServiceTeacher::Rt => TeacherVariant::Random,
        }
    }
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub dataset: String,
    #[serde(default)]
    pub teacher: ServiceTeacher,
    /// Known decay rate; skips calibration.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Overrides the memory-derived budget.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub eval_per_class: Option<usize>,
    #[serde(default)]
    pub schedule: Option<EtaSchedule>,
}

impl SessionConfig {
    pub fn new(dataset: impl Into<String>) -> Self {
        SessionConfig {
            dataset: dataset.into(),
            teacher: ServiceTeacher::default(),
            beta: None,
            seed: None,
            budget: None,
            eval_per_class: None,
            schedule: None,
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if let Some(b) = self.beta {
            if !(0.0..1.0).contains(&b) {
                return Err(ServiceError::BadRequest(format!("beta must lie in [0, 1), got {b}")));
            }
        }
        if self.budget == Some(0) {
            return Err(ServiceError::BadRequest("budget must be positive".into()));
        }
        if self.eval_per_class == Some(0) {
            return Err(ServiceError::BadRequest("eval_per_class must be positive".into()));
        }
        if let Some(s) = &self.schedule {
            s.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Calibration,
    Teaching,
    Evaluation,
    Done,
}

/// The learner's memory as used for teaching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    pub beta: f64,
    pub n_bar: f64,
    /// Present when measured by calibration rather than supplied.
    pub trial_scores: Option<[usize; TRIALS]>,
    pub memory_budget: usize,
}

impl Memory {
    /// Memory from a known β, with `n̄ = 1/(1 − β)`.
    pub fn supplied(beta: f64) -> Result<Self, ServiceError> {
        let n_bar = 1.0 / (1.0 - beta);
        let budget = teaching_budget(n_bar.clamp(MIN_SET_SIZE as f64, MAX_SET_SIZE as f64)).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        Ok(Memory {
            beta,
            n_bar,
            trial_scores: None,
            memory_budget: budget,
        })
    }
}

/// Body of `POST /sessions/{id}/calibration`: either full sorting trials or
/// their scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationInput {
    #[serde(default)]
    pub trials: Option<Vec<SortingTrial>>,
    #[serde(default)]
    pub scores: Option<Vec<usize>>,
}

impl CalibrationInput {
    pub fn scores(&self) -> Result<Vec<usize>, ServiceError> {
        let bad = |m: String| ServiceError::BadRequest(m);
        match (&self.trials, &self.scores) {
            (Some(t), None) => {
                if t.len() != TRIALS {
                    return Err(bad(format!("expected {TRIALS} trials, got {}", t.len())));
                }
                t.iter().map(|t| score_trial(t).map_err(|e| bad(e.to_string()))).collect()
            }
            (None, Some(s)) => {
                if s.len() != TRIALS {
                    return Err(bad(format!("expected {TRIALS} trial scores, got {}", s.len())));
                }
                Ok(s.clone())
            }
            _ => Err(bad("send exactly one of `trials` or `scores`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachingGainReport {
    pub teaching_accuracy_first_seen: f64,
    pub evaluation_accuracy: f64,
    pub teaching_gain: f64,
    pub first_seen_count: usize,
    pub evaluation_count: usize,
}

/// Gain of evaluation accuracy over the accuracy on teaching examples the
/// first time each was shown.
pub fn teaching_gain(events: &[TeachingEvent], eval_correct: &[bool]) -> TeachingGainReport {
    let mut seen = HashSet::new();
    let (mut first, mut first_ok) = (0usize, 0usize);
    for e in events {
        if seen.insert(e.example_id.as_str()) {
            first += 1;
            first_ok += usize::from(e.correct());
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let teach = ratio(first_ok, first);
    let eval = ratio(eval_correct.iter().filter(|c| **c).count(), eval_correct.len());
    TeachingGainReport {
        teaching_accuracy_first_seen: teach,
        evaluation_accuracy: eval,
        teaching_gain: eval - teach,
        first_seen_count: first,
        evaluation_count: eval_correct.len(),
    }
}

/// Recommended example awaiting the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub rec: Recommendation,
    pub answer: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        id: String,
        token: String,
        seed: u64,
        config: SessionConfig,
    },
    Calibrated {
        scores: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trials: Option<Vec<SortingTrial>>,
    },
    Recommended {
        rec: Recommendation,
    },
    Answered {
        step: usize,
        example_id: String,
        label: Label,
    },
    Revealed {
        step: usize,
        true_label: Label,
    },
    EvaluationSubmitted {
        answers: Vec<Label>,
    },
}

/// A logged event with its sequence number and wall-clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub at_ms: u64,
    pub event: SessionEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub token: String,
    pub seed: u64,
    pub config: SessionConfig,
    pub phase: Phase,
    pub memory: Option<Memory>,
    pub budget: Option<usize>,
    pub teacher: Option<Teacher>,
    pub pending: Option<Pending>,
    pub events: Vec<TeachingEvent>,
    /// Indices into the dataset's evaluation examples, in display order.
    pub eval_batch: Vec<usize>,
    pub eval_answers: Option<Vec<Label>>,
    pub report: Option<TeachingGainReport>,
    pub recommendations_computed: usize,
    pub last_seq: u64,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

fn conflict(phase: Phase, msg: impl Into<String>) -> ServiceError {
    ServiceError::Conflict {
        msg: msg.into(),
        phase: Some(phase),
    }
}

impl Session {
    /// Start a session from its creation record.
    pub fn create(record: &LogRecord, data: &DatasetEntry) -> Result<Self, ServiceError> {
        let SessionEvent::Created { id, token, seed, config } = &record.event else {
            return Err(ServiceError::Internal("log does not start with a creation event".into()));
        };
        config.validate()?;
        let mut s = Session {
            id: id.clone(),
            token: token.clone(),
            seed: *seed,
            config: config.clone(),
            phase: Phase::Calibration,
            memory: None,
            budget: None,
            teacher: None,
            pending: None,
            events: Vec::new(),
            eval_batch: Vec::new(),
            eval_answers: None,
            report: None,
            recommendations_computed: 0,
            last_seq: record.seq,
            created_at_ms: record.at_ms,
            updated_at_ms: record.at_ms,
        };
        if let Some(beta) = config.beta {
            s.start_teaching(Memory::supplied(beta)?, data)?;
        }
        Ok(s)
    }

    pub fn schedule(&self, data: &DatasetEntry) -> EtaSchedule {
        self.config.schedule.unwrap_or(data.schedule)
    }

    fn start_teaching(&mut self, memory: Memory, data: &DatasetEntry) -> Result<(), ServiceError> {
        let budget = self.config.budget.unwrap_or(match self.config.teacher {
            ServiceTeacher::Jedi => memory.memory_budget,
            _ => FIXED_BUDGET,
        });
        let kind = TeacherKind::new(self.config.teacher.variant(), memory.beta, self.schedule(data), budget)
            .with_cold_start(HUMAN_COLD_START.min(budget));
        self.teacher = Some(Teacher::new(kind).map_err(|e| ServiceError::BadRequest(e.to_string()))?);
        self.memory = Some(memory);
        self.budget = Some(budget);
        self.phase = Phase::Teaching;
        Ok(())
    }

    pub fn step(&self) -> usize {
        self.events.len() + 1
    }

    pub fn remaining(&self) -> usize {
        self.budget.map_or(0, |b| b.saturating_sub(self.events.len()))
    }

    /// Fold one event into the state. Events that do not fit the current
    /// state are rejected and leave it untouched.
    pub fn apply(&mut self, record: &LogRecord, data: &DatasetEntry) -> Result<(), ServiceError> {
        let mut next = self.clone();
        next.apply_inner(&record.event, data)?;
        next.last_seq = record.seq;
        next.updated_at_ms = record.at_ms;
        *self = next;
        Ok(())
    }

    fn apply_inner(&mut self, event: &SessionEvent, data: &DatasetEntry) -> Result<(), ServiceError> {
        let pool = &data.teach;
        match event {
            SessionEvent::Created { .. } => Err(ServiceError::Internal("duplicate creation event".into())),
            SessionEvent::Calibrated { scores, .. } => {
                if self.phase != Phase::Calibration {
                    return Err(conflict(self.phase, "calibration already submitted"));
                }
                let p = estimate_beta(scores).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
                let memory = Memory {
                    beta: p.beta,
                    n_bar: p.n_bar,
                    trial_scores: Some(p.trial_scores),
                    memory_budget: p.budget,
                };
                self.start_teaching(memory, data)
            }
            SessionEvent::Recommended { rec } => {
                if self.phase != Phase::Teaching {
                    return Err(conflict(self.phase, "not teaching"));
                }
                if self.pending.is_some() {
                    return Err(conflict(self.phase, "an example is already pending"));
                }
                if rec.step != self.step() || rec.index >= pool.len() {
                    return Err(ServiceError::Internal(format!("recommendation for step {} does not fit", rec.step)));
                }
                self.pending = Some(Pending { rec: rec.clone(), answer: None });
                self.recommendations_computed += 1;
                Ok(())
            }
            SessionEvent::Answered { step, example_id, label } => {
                let phase = self.phase;
                let p = self.pending.as_mut().ok_or_else(|| conflict(phase, "no example is pending"))?;
                if p.answer.is_some() {
                    return Err(conflict(phase, "label already submitted"));
                }
                let shown = &pool.examples()[p.rec.index];
                if *step != p.rec.step || *example_id != shown.id {
                    return Err(conflict(phase, format!("pending example is `{}`, not `{example_id}`", shown.id)));
                }
                p.answer = Some(*label);
                Ok(())
            }
            SessionEvent::Revealed { step, true_label } => {
                let phase = self.phase;
                let p = self.pending.take().ok_or_else(|| conflict(phase, "no example is pending"))?;
                let learner_label = p.answer.ok_or_else(|| conflict(phase, "truth revealed before the learner answered"))?;
                let example = &pool.examples()[p.rec.index];
                if *step != p.rec.step || *true_label != example.y {
                    return Err(ServiceError::Internal("reveal does not match the pending example".into()));
                }
                let teacher = self.teacher.as_mut().ok_or_else(|| ServiceError::Internal("teacher missing".into()))?;
                teacher
                    .observe(&data.env(), &p.rec, learner_label)
                    .map_err(|e| ServiceError::Internal(e.to_string()))?;
                self.events.push(ShownExample::new(p.rec.step, example, p.rec.score).answer(learner_label).reveal());
                if self.remaining() == 0 {
                    self.phase = Phase::Evaluation;
                    self.eval_batch = eval_batch(&data.eval_labels(), self.config.eval_per_class.unwrap_or(DEFAULT_EVAL_PER_CLASS), self.seed);
                }
                Ok(())
            }
            SessionEvent::EvaluationSubmitted { answers } => {
                if self.phase != Phase::Evaluation {
                    return Err(conflict(self.phase, "not in evaluation"));
                }
                if answers.len() != self.eval_batch.len() {
                    return Err(ServiceError::BadRequest(format!(
                        "expected {} answers, got {}",
                        self.eval_batch.len(),
                        answers.len()
                    )));
                }
                let correct: Vec<bool> = self.eval_batch.iter().zip(answers).map(|(&i, a)| data.eval[i].y == *a).collect();
                self.report = Some(teaching_gain(&self.events, &correct));
                self.eval_answers = Some(answers.clone());
                self.phase = Phase::Done;
                Ok(())
            }
        }
    }
}

/// Up to `per_class` evaluation examples of each class, shuffled by `seed`.
pub fn eval_batch(labels: &[Label], per_class: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::Evaluation);
    let mut out = Vec::new();
    for class in [Label::Pos, Label::Neg] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        idx.truncate(per_class);
        out.extend(idx);
    }
    out.shuffle(&mut rng);
    out
}
