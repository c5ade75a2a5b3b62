//! Synthetic datasets and stratified splitting.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Example, Label, TeachingPool};
use crate::rng::{stream_rng, Stream};

pub const DEFAULT_SPLIT: f64 = 0.2;

/// Multivariate normal sampler backed by a Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl Gaussian {
    /// `cov` is row-major `m × m`; must be symmetric positive definite.
    pub fn new(mean: &[f64], cov: &[f64]) -> Result<Self> {
        let m = mean.len();
        if m == 0 || cov.len() != m * m || cov.iter().chain(mean).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance);
        }
        let c = DMatrix::from_row_slice(m, m, cov);
        if (0..m).any(|i| (0..i).any(|j| c[(i, j)] != c[(j, i)])) {
            return Err(Error::InvalidCovariance);
        }
        let chol = c.cholesky().ok_or(Error::InvalidCovariance)?;
        Ok(Gaussian {
            mean: DVector::from_column_slice(mean),
            chol: chol.l(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        (&self.mean + &self.chol * z).iter().copied().collect()
    }
}

/// Two-class Gaussian mixture in the plane: each class draws from its first
/// component with probability 2/3 and its second with 1/3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Mixture2dSpec {
    /// Component means, positive class first: `[μ₁, μ₂, μ₃, μ₄]`.
    pub means: [[f64; 2]; 4],
    /// Row-major covariance of each class's first component.
    pub sigma1: [f64; 4],
    /// Row-major covariance of each class's second component.
    pub sigma2: [f64; 4],
    pub first_weight: f64,
    pub per_class: usize,
    pub eval_per_class: usize,
}

impl Default for Mixture2dSpec {
    fn default() -> Self {
        Mixture2dSpec {
            means: [[0.0, 8.0], [8.0, 0.0], [-8.0, 0.0], [0.0, -8.0]],
            sigma1: [12.0, 6.0, 6.0, 12.0],
            sigma2: [10.0, 5.0, 5.0, 10.0],
            first_weight: 2.0 / 3.0,
            per_class: 150,
            eval_per_class: 150,
        }
    }
}

/// Two isotropic-mean Gaussian classes at `∓offset` in every coordinate,
/// sharing one diagonal covariance whose entries are drawn uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Gaussian10dSpec {
    pub dim: usize,
    pub offset: f64,
    pub diag_range: (f64, f64),
    pub per_class: usize,
    pub split_fraction: f64,
}

impl Default for Gaussian10dSpec {
    fn default() -> Self {
        Gaussian10dSpec {
            dim: 10,
            offset: 0.6,
            diag_range: (1.0, 10.0),
            per_class: 1000,
            split_fraction: DEFAULT_SPLIT,
        }
    }
}

/// A teaching pool and its held-out evaluation examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub teach: TeachingPool,
    pub eval: Vec<Example>,
}

fn validate_split(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("split fraction must lie in (0, 1), got {fraction}")))
    }
}

fn mixture_class<R: Rng + ?Sized>(
    first: &Gaussian,
    second: &Gaussian,
    weight: f64,
    n: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < weight {
                first.sample(rng)
            } else {
                second.sample(rng)
            }
        })
        .collect()
}

fn labeled(prefix: &str, pos: Vec<Vec<f64>>, neg: Vec<Vec<f64>>) -> Vec<Example> {
    let mut out = Vec::with_capacity(pos.len() + neg.len());
    let tagged = pos.into_iter().map(|x| (x, Label::Pos)).chain(neg.into_iter().map(|x| (x, Label::Neg)));
    for (i, (x, y)) in tagged.enumerate() {
        out.push(Example::new(format!("{prefix}{i:05}"), x, y));
    }
    out
}

/// Sample the 2D mixture teaching pool and an independent evaluation set.
pub fn gen_mixture2d(spec: &Mixture2dSpec, seed: u64) -> Result<Dataset> {
    if spec.per_class == 0 {
        return Err(Error::InvalidConfig("per-class count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.first_weight) {
        return Err(Error::InvalidConfig(format!("mixture weight {} outside [0, 1]", spec.first_weight)));
    }
    let g = |k: usize, cov: &[f64; 4]| Gaussian::new(&spec.means[k], cov);
    let (p1, p2) = (g(0, &spec.sigma1)?, g(1, &spec.sigma2)?);
    let (n1, n2) = (g(2, &spec.sigma1)?, g(3, &spec.sigma2)?);
    let mut rng = stream_rng(seed, Stream::Data);
    let w = spec.first_weight;
    let pos = mixture_class(&p1, &p2, w, spec.per_class, &mut rng);
    let neg = mixture_class(&n1, &n2, w, spec.per_class, &mut rng);
    let pos_e = mixture_class(&p1, &p2, w, spec.eval_per_class, &mut rng);
    let neg_e = mixture_class(&n1, &n2, w, spec.eval_per_class, &mut rng);
    Ok(Dataset {
        teach: TeachingPool::new(labeled("t", pos, neg))?,
        eval: labeled("e", pos_e, neg_e),
    })
}

/// The random covariance diagonal used by [`gen_gaussian10d`] for `seed`.
pub fn gaussian10d_diagonal(spec: &Gaussian10dSpec, seed: u64) -> Result<Vec<f64>> {
    let (lo, hi) = spec.diag_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidCovariance);
    }
    let u = Uniform::new_inclusive(lo, hi).map_err(|_| Error::InvalidCovariance)?;
    let mut rng = stream_rng(seed, Stream::Data);
    Ok((0..spec.dim).map(|_| u.sample(&mut rng)).collect())
}

/// Sample both classes, then split them into teaching and evaluation parts.
pub fn gen_gaussian10d(spec: &Gaussian10dSpec, seed: u64) -> Result<Dataset> {
    validate_split(spec.split_fraction)?;
    if spec.dim == 0 || spec.per_class < 2 {
        return Err(Error::InvalidConfig("need dim ≥ 1 and at least 2 examples per class".into()));
    }
    let diag = gaussian10d_diagonal(spec, seed)?;
    let m = spec.dim;
    let mut cov = alloc::vec![0.0; m * m];
    for (i, d) in diag.iter().enumerate() {
        cov[i * m + i] = *d;
    }
    let pos = Gaussian::new(&alloc::vec![spec.offset; m], &cov)?;
    let neg = Gaussian::new(&alloc::vec![-spec.offset; m], &cov)?;
    // continue the data stream past the diagonal draws
    let mut rng = stream_rng(seed, Stream::Data);
    for _ in 0..m {
        let _: f64 = rng.random();
    }
    let xs_pos: Vec<_> = (0..spec.per_class).map(|_| pos.sample(&mut rng)).collect();
    let xs_neg: Vec<_> = (0..spec.per_class).map(|_| neg.sample(&mut rng)).collect();
    let all = labeled("g", xs_pos, xs_neg);
    let (teach, eval) = split_examples(all, spec.split_fraction, seed)?;
    Ok(Dataset {
        teach: TeachingPool::new(teach)?,
        eval,
    })
}

/// Stratified seeded split of `pool` into `(teach, eval)` with roughly
/// `fraction` of each class in `teach`.
pub fn split(pool: TeachingPool, fraction: f64, seed: u64) -> Result<(TeachingPool, TeachingPool)> {
    let (t, e) = split_examples(pool.into_examples(), fraction, seed)?;
    Ok((TeachingPool::new(t)?, TeachingPool::new(e)?))
}

/// [`split`] on a plain example list. Both sides keep the input order.
pub fn split_examples(examples: Vec<Example>, fraction: f64, seed: u64) -> Result<(Vec<Example>, Vec<Example>)> {
    validate_split(fraction)?;
    let mut rng = stream_rng(seed, Stream::Split);
    let mut in_teach = alloc::vec![false; examples.len()];
    for label in [Label::Pos, Label::Neg] {
        let mut idx: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].y == label).collect();
        let n = idx.len();
        if n < 2 {
            return Err(Error::InvalidPool(format!(
                "class {} has {n} example(s); splitting needs at least 2",
                label.sign()
            )));
        }
        let k = libm::round(fraction * n as f64).clamp(1.0, (n - 1) as f64) as usize;
        idx.shuffle(&mut rng);
        for &i in &idx[..k] {
            in_teach[i] = true;
        }
    }
    let (mut teach, mut eval) = (Vec::new(), Vec::new());
    for (ex, t) in examples.into_iter().zip(in_teach) {
        if t {
            teach.push(ex)
        } else {
            eval.push(ex)
        }
    }
    Ok((teach, eval))
}

/// Short human-readable summary of a pool.
pub fn describe(pool: &TeachingPool) -> String {
    let (p, n) = pool.class_counts();
    format!(
        "{} examples, dimension {}, {p} positive / {n} negative, unit sphere: {}",
        pool.len(),
        pool.dimension(),
        pool.unit_sphere()
    )
}
