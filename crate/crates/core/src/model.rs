//! Domain types and the learner's dynamics.
//!
//! A learner holds a linear concept `w` and a concept momentum `v`. Each
//! revealed example contributes its logistic-loss gradient to the momentum,
//! older gradients decaying by the memory rate `β`:
//!
//! ```text
//! v_t = β v_{t−1} + ∂L(w_{t−1}ᵀx_t, y_t)/∂w_{t−1}
//! w_t = w_{t−1} − η_t v_t
//! ```

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, check_dim, dist_sq, dot, norm};

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Neg => -1.0,
            Label::Pos => 1.0,
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Neg => Label::Pos,
            Label::Pos => Label::Neg,
        }
    }

    /// Label from a score: positive is `Pos`, negative is `Neg`, zero is `None`.
    pub fn from_score(s: f64) -> Option<Label> {
        if s > 0.0 {
            Some(Label::Pos)
        } else if s < 0.0 {
            Some(Label::Neg)
        } else {
            None
        }
    }

    /// Column of this label in a two-column label matrix (`Pos` first).
    pub fn column(self) -> usize {
        match self {
            Label::Pos => 0,
            Label::Neg => 1,
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Neg => -1,
            Label::Pos => 1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> core::result::Result<Self, String> {
        match v {
            -1 => Ok(Label::Neg),
            1 => Ok(Label::Pos),
            other => Err(format!("label must be -1 or 1, got {other}")),
        }
    }
}

/// One labeled element of the teaching pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub x: Vec<f64>,
    pub y: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl Example {
    pub fn new(id: impl Into<String>, x: Vec<f64>, y: Label) -> Self {
        Example {
            id: id.into(),
            x,
            y,
            payload: None,
        }
    }
}

/// Tolerance on `|‖x‖₂ − 1|` for a pool to count as living on the unit sphere.
pub const UNIT_SPHERE_TOL: f64 = 1e-9;

/// The labeled set the teacher draws examples from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachingPool {
    examples: Vec<Example>,
    dimension: usize,
    unit_sphere: bool,
}

impl TeachingPool {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let first = examples.first().ok_or(Error::EmptyPool)?;
        let dimension = first.x.len();
        if dimension == 0 {
            return Err(Error::InvalidPool("examples have no features".into()));
        }
        let mut ids = BTreeSet::new();
        let (mut pos, mut neg) = (0usize, 0usize);
        for e in &examples {
            check_dim(dimension, e.x.len())?;
            if e.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPool(format!("example {} has non-finite features", e.id)));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::InvalidPool(format!("duplicate example id {}", e.id)));
            }
            match e.y {
                Label::Pos => pos += 1,
                Label::Neg => neg += 1,
            }
        }
        if pos == 0 || neg == 0 {
            return Err(Error::InvalidPool("pool must contain both labels".into()));
        }
        let unit_sphere = max_unit_deviation(&examples) <= UNIT_SPHERE_TOL;
        Ok(TeachingPool {
            examples,
            dimension,
            unit_sphere,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, index: usize) -> Option<&Example> {
        self.examples.get(index)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn unit_sphere(&self) -> bool {
        self.unit_sphere
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.examples.iter().position(|e| e.id == id)
    }

    /// `(positives, negatives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.examples.iter().filter(|e| e.y == Label::Pos).count();
        (pos, self.examples.len() - pos)
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }
}

/// Largest `|‖x‖₂ − 1|` over a set of examples.
pub fn max_unit_deviation(examples: &[Example]) -> f64 {
    examples
        .iter()
        .map(|e| libm::fabs(norm(&e.x) - 1.0))
        .fold(0.0, f64::max)
}

/// A linear concept `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Concept(pub Vec<f64>);

impl Concept {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("concept has non-finite entries".into()));
        }
        Ok(Concept(w))
    }

    pub fn zeros(dim: usize) -> Self {
        Concept(alloc::vec![0.0; dim])
    }

    /// i.i.d. standard normal entries scaled by `1/√m`.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let scale = 1.0 / libm::sqrt(dim as f64);
        Concept(
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * scale
                })
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dist_sq(&self, other: &Concept) -> f64 {
        dist_sq(&self.0, &other.0)
    }

    /// Fraction of `examples` whose label matches `sign(wᵀx)`. Zero scores count as wrong.
    pub fn accuracy(&self, examples: &[Example]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let correct = examples
            .iter()
            .filter(|e| Label::from_score(dot(&self.0, &e.x)) == Some(e.y))
            .count();
        correct as f64 / examples.len() as f64
    }
}

/// Learning-rate rule `η_t`, with `t ≥ 1` the teaching iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaSchedule {
    Constant { eta0: f64 },
    /// `η_t = c/(c+t)·η₀`
    Decay { eta0: f64, c: f64 },
}

pub const DEFAULT_ETA0: f64 = 0.03;

impl Default for EtaSchedule {
    fn default() -> Self {
        EtaSchedule::Constant { eta0: DEFAULT_ETA0 }
    }
}

impl EtaSchedule {
    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            EtaSchedule::Constant { eta0 } => eta0,
            EtaSchedule::Decay { eta0, c } => c / (c + t as f64) * eta0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (eta0, c) = match *self {
            EtaSchedule::Constant { eta0 } => (eta0, 1.0),
            EtaSchedule::Decay { eta0, c } => (eta0, c),
        };
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::InvalidLearningRate(eta0));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(format!("decay constant must be positive, got {c}")));
        }
        Ok(())
    }
}

/// Default standard deviation of the Gaussian noise added to a simulated
/// learner's concept after each update.
pub const DEFAULT_NOISE_STD: f64 = 0.01;

/// A learner with exponentially decayed memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub w: Concept,
    pub v: Vec<f64>,
    pub beta: f64,
    pub step: usize,
    pub schedule: EtaSchedule,
    pub noise_std: f64,
}

impl LearnerState {
    pub fn new(w0: Concept, beta: f64, schedule: EtaSchedule, noise_std: f64) -> Result<Self> {
        validate_beta(beta)?;
        schedule.validate()?;
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise std must be non-negative, got {noise_std}")));
        }
        let dim = w0.dim();
        Ok(LearnerState {
            w: w0,
            v: alloc::vec![0.0; dim],
            beta,
            step: 0,
            schedule,
            noise_std,
        })
    }

    /// Learning rate for the next update.
    pub fn next_eta(&self) -> f64 {
        self.schedule.eta(self.step + 1)
    }

    pub fn update<R: Rng + ?Sized>(&self, x: &[f64], y: Label, eta: f64, rng: &mut R) -> Result<Self> {
        learner_update(self, x, y, eta, rng)
    }

    pub fn predict<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Label> {
        learner_predict(self, x, rng)
    }
}

pub fn validate_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidBeta(beta))
    }
}

/// `log(1 + exp(−y⟨w,x⟩))`.
///
/// Evaluated as `max(−z, 0) + log1p(exp(−|z|))`. Once the true value drops
/// below the smallest subnormal it is reported as that subnormal, so the loss
/// stays strictly positive.
pub fn logistic_loss(w: &Concept, x: &[f64], y: Label) -> Result<f64> {
    check_dim(w.dim(), x.len())?;
    let z = y.sign() * dot(&w.0, x);
    Ok(softplus(-z))
}

/// `log(1 + exp(s))`, floored at the smallest positive subnormal.
pub(crate) fn softplus(s: f64) -> f64 {
    let v = f64::max(s, 0.0) + libm::log1p(libm::exp(-libm::fabs(s)));
    v.max(f64::from_bits(1))
}

/// Logistic sigmoid `1/(1+exp(−s))`, evaluated without overflow.
pub(crate) fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + libm::exp(-s))
    } else {
        let e = libm::exp(s);
        e / (1.0 + e)
    }
}

/// Probability of incorrect prediction `f = 1/(1+exp(y⟨w,x⟩))`.
pub fn incorrect_prob(w: &Concept, x: &[f64], y: Label) -> Result<f64> {
    check_dim(w.dim(), x.len())?;
    Ok(sigmoid(-y.sign() * dot(&w.0, x)))
}

/// Gradient of the logistic loss with respect to `w`: `−y·f·x`.
pub fn loss_gradient(w: &Concept, x: &[f64], y: Label) -> Result<Vec<f64>> {
    let f = incorrect_prob(w, x, y)?;
    let c = -y.sign() * f;
    Ok(x.iter().map(|xi| c * xi).collect())
}

/// One step of the decayed-momentum learner on a revealed example.
///
/// When `noise_std > 0`, i.i.d. Gaussian noise is added to `w` after the
/// gradient step, drawn from `rng`.
pub fn learner_update<R: Rng + ?Sized>(
    state: &LearnerState,
    x: &[f64],
    y: Label,
    eta: f64,
    rng: &mut R,
) -> Result<LearnerState> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidLearningRate(eta));
    }
    let g = loss_gradient(&state.w, x, y)?;
    let mut next = state.clone();
    for (vi, gi) in next.v.iter_mut().zip(&g) {
        *vi = state.beta * *vi + gi;
    }
    axpy(-eta, &next.v, &mut next.w.0);
    if state.noise_std > 0.0 {
        let noise = Normal::new(0.0, state.noise_std)
            .map_err(|_| Error::InvalidConfig("bad noise std".into()))?;
        for wi in next.w.0.iter_mut() {
            *wi += noise.sample(rng);
        }
    }
    next.step += 1;
    Ok(next)
}

/// `sign(⟨w,x⟩)`, with an exact zero broken by a fair coin from `rng`.
pub fn learner_predict<R: Rng + ?Sized>(state: &LearnerState, x: &[f64], rng: &mut R) -> Result<Label> {
    check_dim(state.w.dim(), x.len())?;
    Ok(match Label::from_score(dot(&state.w.0, x)) {
        Some(l) => l,
        None => {
            if rng.random::<bool>() {
                Label::Pos
            } else {
                Label::Neg
            }
        }
    })
}

/// Effective number of remembered examples, `1/(1−β)`.
pub fn memory_window(beta: f64) -> Result<f64> {
    validate_beta(beta)?;
    Ok(1.0 / (1.0 - beta))
}

/// One completed teaching iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachingEvent {
    pub step: usize,
    pub example_id: String,
    pub shown_x: Vec<f64>,
    pub learner_label: Label,
    pub true_label: Label,
    /// Teacher's score of the chosen example; absent for random picks.
    pub objective_value: Option<f64>,
}

impl TeachingEvent {
    pub fn correct(&self) -> bool {
        self.learner_label == self.true_label
    }
}

/// An example shown to the learner whose label has not been answered yet.
///
/// The only way to obtain a [`TeachingEvent`] is `shown → answer → reveal`,
/// so the learner's label is always committed before the truth is exposed.
#[derive(Debug, Clone)]
pub struct ShownExample<'a> {
    step: usize,
    example: &'a Example,
    objective_value: Option<f64>,
}

/// A shown example with the learner's answer committed.
#[derive(Debug, Clone)]
pub struct AnsweredExample<'a> {
    shown: ShownExample<'a>,
    learner_label: Label,
}

impl<'a> ShownExample<'a> {
    pub fn new(step: usize, example: &'a Example, objective_value: Option<f64>) -> Self {
        ShownExample {
            step,
            example,
            objective_value,
        }
    }

    /// Features visible to the learner. The label is not exposed here.
    pub fn x(&self) -> &[f64] {
        &self.example.x
    }

    pub fn answer(self, learner_label: Label) -> AnsweredExample<'a> {
        AnsweredExample {
            shown: self,
            learner_label,
        }
    }
}

impl<'a> AnsweredExample<'a> {
    pub fn learner_label(&self) -> Label {
        self.learner_label
    }

    /// Reveal the true label, closing the event.
    pub fn reveal(self) -> TeachingEvent {
        let e = self.shown.example;
        TeachingEvent {
            step: self.shown.step,
            example_id: e.id.clone(),
            shown_x: e.x.clone(),
            learner_label: self.learner_label,
            true_label: e.y,
            objective_value: self.shown.objective_value,
        }
    }
}
