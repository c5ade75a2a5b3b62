//! The teaching objective.
//!
//! Substituting the learner update into `‖w_t − w_*‖²` and dropping terms
//! that do not depend on the next example `(x, y)` leaves
//!
//! ```text
//! η²‖a − βv_{t−1}‖² − 2η⟨w_* − w_{t−1}, a⟩,    a = y·f·x
//! ```
//!
//! where `f` is the learner's probability of mislabeling `x`. The first part
//! (diversity) rewards a negative gradient that agrees with what the learner
//! still remembers; the second (usefulness) rewards alignment with the
//! remaining teaching direction. Completing the square gives the pool search
//! score `‖a − (βv_{t−1} + (w_* − w_{t−1})/η)‖²`, which differs from the
//! expansion above only by a candidate-independent constant and a factor `η²`.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{angle, check_dim, dot, norm_sq};
use crate::model::{Concept, Example, Label};

/// How the decayed momentum enters the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumTerm {
    /// `β·v_{t−1}`: the exact expansion of the memory model.
    #[default]
    Scaled,
    /// `v_{t−1}` without the extra decay factor. Kept for ablations.
    Raw,
}

/// The gradient contribution of one taught example: `(x_s, y_s, f_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientRecord {
    pub x: Vec<f64>,
    pub y: Label,
    pub f: f64,
}

impl GradientRecord {
    /// The loss gradient `−y·f·x`.
    pub fn gradient(&self) -> Vec<f64> {
        let c = -self.y.sign() * self.f;
        self.x.iter().map(|v| c * v).collect()
    }
}

/// `v = Σ_s β^{t−1−s}·(−y_s f_s x_s)` over a history ordered oldest first.
pub fn momentum_from_history(history: &[GradientRecord], beta: f64, dim: usize) -> Result<Vec<f64>> {
    let mut v = alloc::vec![0.0; dim];
    for rec in history {
        check_dim(dim, rec.x.len())?;
        let c = -rec.y.sign() * rec.f;
        for (vi, xi) in v.iter_mut().zip(&rec.x) {
            *vi = beta * *vi + c * xi;
        }
    }
    Ok(v)
}

/// Everything the teacher needs to score a candidate at iteration `t`.
#[derive(Debug, Clone, Copy)]
pub struct TeacherContext<'a> {
    pub target: &'a Concept,
    pub learner: &'a Concept,
    /// `v_{t−1}`
    pub momentum: &'a [f64],
    pub beta: f64,
    pub eta: f64,
    pub momentum_term: MomentumTerm,
}

impl<'a> TeacherContext<'a> {
    pub fn new(target: &'a Concept, learner: &'a Concept, momentum: &'a [f64], beta: f64, eta: f64) -> Result<Self> {
        check_dim(target.dim(), learner.dim())?;
        check_dim(target.dim(), momentum.len())?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidLearningRate(eta));
        }
        crate::model::validate_beta(beta)?;
        Ok(TeacherContext {
            target,
            learner,
            momentum,
            beta,
            eta,
            momentum_term: MomentumTerm::Scaled,
        })
    }

    pub fn with_momentum_term(mut self, term: MomentumTerm) -> Self {
        self.momentum_term = term;
        self
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    fn momentum_scale(&self) -> f64 {
        match self.momentum_term {
            MomentumTerm::Scaled => self.beta,
            MomentumTerm::Raw => 1.0,
        }
    }

    /// `w_* − w_{t−1}`
    pub fn direction(&self) -> Vec<f64> {
        self.target.0.iter().zip(&self.learner.0).map(|(a, b)| a - b).collect()
    }

    /// True when the learner already holds the target concept.
    pub fn at_target(&self) -> bool {
        self.target == self.learner
    }

    /// `βv_{t−1} + (w_* − w_{t−1})/η`, the point the pool search aims at.
    pub fn aim(&self) -> Vec<f64> {
        let s = self.momentum_scale();
        self.momentum
            .iter()
            .zip(self.target.0.iter().zip(&self.learner.0))
            .map(|(v, (ws, w))| s * v + (ws - w) / self.eta)
            .collect()
    }

    fn check(&self, x: &[f64], f: f64) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidConfig(alloc::format!("probability f must lie in [0, 1], got {f}")));
        }
        Ok(())
    }
}

/// Diversity `‖y·f·x − βv_{t−1}‖²`.
pub fn diversity_term(ctx: &TeacherContext<'_>, x: &[f64], y: Label, f: f64) -> Result<f64> {
    ctx.check(x, f)?;
    let c = y.sign() * f;
    let s = ctx.momentum_scale();
    Ok(x.iter()
        .zip(ctx.momentum)
        .map(|(xi, vi)| {
            let d = c * xi - s * vi;
            d * d
        })
        .sum())
}

/// Usefulness `⟨w_* − w_{t−1}, y·f·x⟩`. Larger is more useful.
pub fn usefulness_term_omniscient(ctx: &TeacherContext<'_>, x: &[f64], y: Label, f: f64) -> Result<f64> {
    ctx.check(x, f)?;
    let c = y.sign() * f;
    Ok(x.iter()
        .zip(ctx.target.0.iter().zip(&ctx.learner.0))
        .map(|(xi, (ws, w))| (ws - w) * c * xi)
        .sum())
}

/// The pool-search score `‖y·f·x − (βv_{t−1} + (w_* − w_{t−1})/η)‖²`.
pub fn jedi_score(ctx: &TeacherContext<'_>, x: &[f64], y: Label, f: f64) -> Result<f64> {
    ctx.check(x, f)?;
    let aim = ctx.aim();
    Ok(residual_sq(x, y.sign() * f, &aim))
}

/// `η²·diversity − 2η·usefulness`: the objective before completing the square.
pub fn expanded_objective(ctx: &TeacherContext<'_>, x: &[f64], y: Label, f: f64) -> Result<f64> {
    let div = diversity_term(ctx, x, y, f)?;
    let use_ = usefulness_term_omniscient(ctx, x, y, f)?;
    Ok(ctx.eta * ctx.eta * div - 2.0 * ctx.eta * use_)
}

/// Memoryless iterative-teaching score `‖y·f·x − (w_* − w_{t−1})/η‖²`.
pub fn imt_score(ctx: &TeacherContext<'_>, x: &[f64], y: Label, f: f64) -> Result<f64> {
    ctx.check(x, f)?;
    let aim: Vec<f64> = ctx
        .target
        .0
        .iter()
        .zip(&ctx.learner.0)
        .map(|(ws, w)| (ws - w) / ctx.eta)
        .collect();
    Ok(residual_sq(x, y.sign() * f, &aim))
}

fn residual_sq(x: &[f64], c: f64, aim: &[f64]) -> f64 {
    x.iter()
        .zip(aim)
        .map(|(xi, ai)| {
            let d = c * xi - ai;
            d * d
        })
        .sum()
}

/// Index of the smallest score; ties go to the lexicographically lowest id.
/// NaN scores are never selected.
pub fn argmin_by_score(examples: &[Example], scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => match s.total_cmp(&scores[b]) {
                Ordering::Less => Some(i),
                Ordering::Equal if examples[i].id < examples[b].id => Some(i),
                _ => Some(b),
            },
        };
    }
    best
}

/// All indices attaining the minimum score exactly.
pub fn min_tie_set(scores: &[f64]) -> Vec<usize> {
    let min = scores.iter().copied().filter(|s| !s.is_nan()).fold(f64::INFINITY, f64::min);
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == min)
        .map(|(i, _)| i)
        .collect()
}

/// Relation between two consecutive teaching labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeachingAction {
    /// Same label as the previous example.
    Exploitation,
    /// Opposite label to the previous example.
    Exploration,
}

/// Closed-form two-example analysis of the teaching objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoExampleAnalysis {
    /// Angle between the previous negative gradient and `w_* − w_{t−1}`.
    pub theta: f64,
    /// Coefficient of the component of `w_* − w_{t−1}` parallel to `βy_{t−1}f_{t−1}x_{t−1}`.
    pub alpha: f64,
    /// `(1 − α/η)β`
    pub gamma_plus: f64,
    /// `ξ_t = (w_* − w_{t−1})_⊥ / (η·y_t·f_t)`
    pub perturbation: Vec<f64>,
    pub action: TeachingAction,
    /// Unconstrained minimizer of the score for label `y_t` and probability `f_t`.
    pub x_opt: Vec<f64>,
}

/// Analyze the next step after a single previous example `prev`.
///
/// `candidate_f` is the mislabeling probability the minimizer is solved for;
/// the score is treated as a function of `x` with `f_t` held fixed.
pub fn two_example_analysis(
    ctx: &TeacherContext<'_>,
    prev: &GradientRecord,
    candidate_label: Label,
    candidate_f: f64,
) -> Result<TwoExampleAnalysis> {
    check_dim(ctx.dim(), prev.x.len())?;
    if !(candidate_f > 0.0 && candidate_f <= 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "candidate probability must lie in (0, 1], got {candidate_f}"
        )));
    }
    let d = ctx.direction();
    let neg_grad: Vec<f64> = prev.x.iter().map(|v| prev.y.sign() * prev.f * v).collect();
    let theta = angle(&neg_grad, &d).ok_or(Error::DegenerateDirection(
        "previous gradient or teaching direction is zero",
    ))?;

    let a_prev: Vec<f64> = neg_grad.iter().map(|v| ctx.beta * v).collect();
    let a_norm_sq = norm_sq(&a_prev);
    let alpha = if a_norm_sq > 0.0 { dot(&d, &a_prev) / a_norm_sq } else { 0.0 };
    let gamma_plus = (1.0 - alpha / ctx.eta) * ctx.beta;

    let yt_ft = candidate_label.sign() * candidate_f;
    let perturbation: Vec<f64> = d
        .iter()
        .zip(&a_prev)
        .map(|(di, ai)| (di - alpha * ai) / (ctx.eta * yt_ft))
        .collect();
    let coef = -ctx.beta * (prev.y.sign() / candidate_label.sign()) * (prev.f / candidate_f);
    let x_opt: Vec<f64> = prev
        .x
        .iter()
        .zip(&d)
        .map(|(xp, di)| coef * xp + di / (yt_ft * ctx.eta))
        .collect();
    let action = if candidate_label == prev.y {
        TeachingAction::Exploitation
    } else {
        TeachingAction::Exploration
    };
    Ok(TwoExampleAnalysis {
        theta,
        alpha,
        gamma_plus,
        perturbation,
        action,
        x_opt,
    })
}

/// Whether a previous example pushed the learner toward the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Usefulness {
    pub angle: f64,
    pub useful: bool,
}

/// An example is not useful when its negative gradient makes an angle of at
/// least `π/2` with `w_* − w_learner`.
pub fn usefulness_check(prev: &GradientRecord, w_learner: &Concept, w_target: &Concept) -> Result<Usefulness> {
    check_dim(w_target.dim(), w_learner.dim())?;
    check_dim(w_target.dim(), prev.x.len())?;
    let neg_grad: Vec<f64> = prev.x.iter().map(|v| prev.y.sign() * prev.f * v).collect();
    let d: Vec<f64> = w_target.0.iter().zip(&w_learner.0).map(|(a, b)| a - b).collect();
    let theta = angle(&neg_grad, &d).ok_or(Error::DegenerateDirection(
        "previous gradient or teaching direction is zero",
    ))?;
    Ok(Usefulness {
        angle: theta,
        useful: dot(&neg_grad, &d) > 0.0,
    })
}
