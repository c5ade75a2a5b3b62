//! Concept estimation with Gaussian-field harmonic functions.
//!
//! The teacher never sees a human learner's concept, only the labels they
//! give. Those labels are spread over the whole pool through a Gaussian
//! affinity graph: the unlabeled nodes take the harmonic solution
//! `F_u = (D_uu − A_uu)⁻¹ A_ul F_l`, whose first column estimates
//! `p = P(y = +1 | x)` under the learner's current concept. The estimates are
//! then turned into the mislabeling probabilities the teaching score needs.
//!
//! Graph layout: node `i < n` is pool example `i` (always unlabeled, so every
//! pool example stays recommendable); node `n + j` is a labeled copy of the
//! `j`-th deduplicated teaching event.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::check_dim;
use crate::model::{Label, TeachingEvent, TeachingPool};

/// Ridge added to the diagonal of `D_uu − A_uu`.
pub const RIDGE: f64 = 1e-9;
/// Estimated probabilities are clamped to `[P_CLAMP, 1 − P_CLAMP]`.
pub const P_CLAMP: f64 = 1e-6;
/// Graphs with more nodes than this are k-NN sparsified under [`Sparsity::Auto`].
pub const DENSE_NODE_LIMIT: usize = 2000;
pub const DEFAULT_KNN: usize = 20;

/// Keep one entry per example id, carrying its most recent learner label.
/// Entries are ordered by first appearance.
pub fn dedup_history(events: &[TeachingEvent]) -> Vec<(String, Label)> {
    let mut order: Vec<(String, Label)> = Vec::new();
    let mut slot: BTreeMap<&str, usize> = BTreeMap::new();
    for e in events {
        match slot.get(e.example_id.as_str()) {
            Some(&i) => order[i].1 = e.learner_label,
            None => {
                slot.insert(e.example_id.as_str(), order.len());
                order.push((e.example_id.clone(), e.learner_label));
            }
        }
    }
    order
}

/// Per-dimension bandwidths: the sample standard deviation of each feature
/// over the pool, times `factor`. Constant features get bandwidth `factor`.
pub fn default_bandwidth(pool: &TeachingPool, factor: f64) -> Result<Vec<f64>> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidConfig(format!("bandwidth factor must be positive, got {factor}")));
    }
    let m = pool.dimension();
    let n = pool.len() as f64;
    let mut mean = alloc::vec![0.0; m];
    for e in pool.examples() {
        for (mu, x) in mean.iter_mut().zip(&e.x) {
            *mu += x / n;
        }
    }
    let mut var = alloc::vec![0.0; m];
    for e in pool.examples() {
        for ((s, x), mu) in var.iter_mut().zip(&e.x).zip(&mean) {
            *s += (x - mu) * (x - mu);
        }
    }
    let denom = if pool.len() > 1 { n - 1.0 } else { 1.0 };
    Ok(var
        .into_iter()
        .map(|s| {
            let sd = libm::sqrt(s / denom);
            if sd > 0.0 {
                sd * factor
            } else {
                factor
            }
        })
        .collect())
}

/// Pairs considered by [`median_factor`] are drawn from at most this many
/// pool examples, taken at an even stride.
const MEDIAN_SAMPLE: usize = 500;

/// Global bandwidth factor that puts the median pairwise exponent of
/// [`gaussian_affinity`] at 1 when `σ_d` is the per-dimension standard
/// deviation. Useful in higher dimensions, where factor 1 leaves most
/// affinities vanishingly small.
pub fn median_factor(pool: &TeachingPool) -> Result<f64> {
    let unit = default_bandwidth(pool, 1.0)?;
    let stride = pool.len().div_ceil(MEDIAN_SAMPLE).max(1);
    let sample: Vec<&[f64]> = pool.examples().iter().step_by(stride).map(|e| e.x.as_slice()).collect();
    let mut d = Vec::with_capacity(sample.len() * sample.len().saturating_sub(1) / 2);
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            d.push(
                sample[i]
                    .iter()
                    .zip(sample[j])
                    .zip(&unit)
                    .map(|((a, b), s)| ((a - b) / s) * ((a - b) / s))
                    .sum::<f64>(),
            );
        }
    }
    if d.is_empty() {
        return Ok(1.0);
    }
    let mid = d.len() / 2;
    let (_, med, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(if *med > 0.0 { libm::sqrt(*med) } else { 1.0 })
}

/// `exp(−Σ_d (a_d − b_d)²/σ_d²)`
pub fn gaussian_affinity(a: &[f64], b: &[f64], sigma: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(sigma)
        .map(|((x, y), s)| {
            let d = (x - y) / s;
            d * d
        })
        .sum();
    libm::exp(-s)
}

/// Edge-set policy for the affinity graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum Sparsity {
    /// Dense up to [`DENSE_NODE_LIMIT`] nodes, `k = 20` nearest neighbors above.
    #[default]
    Auto,
    Dense,
    /// Keep an edge when either endpoint is among the other's `k` nearest neighbors.
    Knn(usize),
}

/// Weighted adjacency, stored densely or as symmetric neighbor lists.
#[derive(Debug, Clone, PartialEq)]
pub enum Affinity {
    Dense(DMatrix<f64>),
    Sparse(Vec<Vec<(usize, f64)>>),
}

impl Affinity {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Affinity::Dense(m) => m[(i, j)],
            Affinity::Sparse(rows) => rows[i].iter().find(|(k, _)| *k == j).map_or(0.0, |(_, w)| *w),
        }
    }

    fn row_sum(&self, i: usize) -> f64 {
        match self {
            Affinity::Dense(m) => m.row(i).sum(),
            Affinity::Sparse(rows) => rows[i].iter().map(|(_, w)| w).sum(),
        }
    }
}

/// Affinity graph over the pool plus labeled copies of the taught examples.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    pool_size: usize,
    /// `(pool index, learner label)` for labeled node `pool_size + j`.
    labeled: Vec<(usize, Label)>,
    affinity: Affinity,
    degree: Vec<f64>,
    sigma: Vec<f64>,
}

impl AffinityGraph {
    pub fn node_count(&self) -> usize {
        self.pool_size + self.labeled.len()
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn labeled(&self) -> &[(usize, Label)] {
        &self.labeled
    }

    pub fn affinity(&self) -> &Affinity {
        &self.affinity
    }

    /// `D_ii = Σ_j A_ij`
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// One-hot learner labels, `|labeled| × 2`, column 0 for `+1`.
    pub fn label_matrix(&self) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.labeled.len(), 2);
        for (j, (_, l)) in self.labeled.iter().enumerate() {
            f[(j, l.column())] = 1.0;
        }
        f
    }
}

/// Build the affinity graph for a pool and its deduplicated labeled history.
pub fn build_affinity(
    pool: &TeachingPool,
    labeled: &[(usize, Label)],
    sigma: &[f64],
    sparsity: Sparsity,
) -> Result<AffinityGraph> {
    check_dim(pool.dimension(), sigma.len())?;
    if let Some(d) = sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidBandwidth(d));
    }
    if labeled.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if let Some((i, _)) = labeled.iter().find(|(i, _)| *i >= pool.len()) {
        return Err(Error::MissingEstimate(*i));
    }
    let n = pool.len();
    let total = n + labeled.len();
    let features = |node: usize| -> &[f64] {
        if node < n {
            &pool.examples()[node].x
        } else {
            &pool.examples()[labeled[node - n].0].x
        }
    };

    let k = match sparsity {
        Sparsity::Dense => None,
        Sparsity::Knn(k) => Some(k),
        Sparsity::Auto if total > DENSE_NODE_LIMIT => Some(DEFAULT_KNN),
        Sparsity::Auto => None,
    };

    let affinity = match k {
        None => {
            let mut a = DMatrix::zeros(total, total);
            for i in 0..total {
                for j in (i + 1)..total {
                    let w = gaussian_affinity(features(i), features(j), sigma);
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
            Affinity::Dense(a)
        }
        Some(k) => {
            if k == 0 {
                return Err(Error::InvalidConfig("k-NN sparsification needs k ≥ 1".into()));
            }
            let mut keep: Vec<BTreeMap<usize, f64>> = alloc::vec![BTreeMap::new(); total];
            let mut row: Vec<(f64, usize)> = Vec::with_capacity(total);
            for i in 0..total {
                row.clear();
                for j in 0..total {
                    if j != i {
                        row.push((gaussian_affinity(features(i), features(j), sigma), j));
                    }
                }
                let kk = k.min(row.len());
                if kk < row.len() {
                    row.select_nth_unstable_by(kk - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                }
                for &(w, j) in &row[..kk] {
                    keep[i].insert(j, w);
                    keep[j].insert(i, w);
                }
            }
            Affinity::Sparse(keep.into_iter().map(|m| m.into_iter().collect()).collect())
        }
    };
    let degree = (0..total).map(|i| affinity.row_sum(i)).collect();
    Ok(AffinityGraph {
        pool_size: n,
        labeled: labeled.to_vec(),
        affinity,
        degree,
        sigma: sigma.to_vec(),
    })
}

/// Harmonic label distribution over the pool nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicEstimate {
    /// Row `i` is `[P(+1), P(−1)]` for pool example `i`.
    pub f_u: Vec<[f64; 2]>,
}

impl HarmonicEstimate {
    /// Uninformative estimate, `p = 1/2` everywhere.
    pub fn uniform(n: usize) -> Self {
        HarmonicEstimate {
            f_u: alloc::vec![[0.5, 0.5]; n],
        }
    }

    /// Estimate from known probabilities `P(y = +1)` per pool example.
    pub fn from_probabilities(p: &[f64]) -> Self {
        HarmonicEstimate {
            f_u: p.iter().map(|&p| [p, 1.0 - p]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.f_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_u.is_empty()
    }

    /// Raw `P(y = +1 | x)` for pool example `index`.
    pub fn p(&self, index: usize) -> Result<f64> {
        self.f_u.get(index).map(|r| r[0]).ok_or(Error::MissingEstimate(index))
    }

    /// `P(y = +1 | x)` clamped to `[P_CLAMP, 1 − P_CLAMP]`.
    pub fn p_clamped(&self, index: usize) -> Result<f64> {
        Ok(clamp_p(self.p(index)?))
    }
}

pub fn clamp_p(p: f64) -> f64 {
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

/// Solve `(D_uu − A_uu + εI) F_u = A_ul F_l` for the pool nodes.
///
/// Rows are renormalized to sum to one; a row with no mass at all (a pool
/// component with no labeled node) falls back to `[1/2, 1/2]`.
pub fn harmonic_solve(graph: &AffinityGraph) -> Result<HarmonicEstimate> {
    if graph.labeled.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let n = graph.pool_size;
    let fl = graph.label_matrix();
    let solution = match &graph.affinity {
        Affinity::Dense(a) => {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = -a[(i, j)];
                }
                m[(i, i)] = graph.degree[i] - a[(i, i)] + RIDGE;
            }
            let aul = a.view((0, n), (n, graph.labeled.len()));
            let rhs = aul * &fl;
            match m.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => m
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::SingularSystem("system matrix is singular".into()))?,
            }
        }
        Affinity::Sparse(rows) => sparse_solve(rows, &graph.degree, n, &graph.labeled)?,
    };

    let mut f_u = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (solution[(i, 0)], solution[(i, 1)]);
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::SingularSystem(format!("non-finite solution at node {i}")));
        }
        let (a, b) = (a.max(0.0), b.max(0.0));
        let s = a + b;
        f_u.push(if s > f64::MIN_POSITIVE { [a / s, b / s] } else { [0.5, 0.5] });
    }
    Ok(HarmonicEstimate { f_u })
}

/// Jacobi-preconditioned conjugate gradient on the sparse system.
fn sparse_solve(rows: &[Vec<(usize, f64)>], degree: &[f64], n: usize, labeled: &[(usize, Label)]) -> Result<DMatrix<f64>> {
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let self_w: f64 = rows[i].iter().filter(|(j, _)| *j == i).map(|(_, w)| w).sum();
            degree[i] - self_w + RIDGE
        })
        .collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut s = diag[i] * x[i];
            for &(j, w) in &rows[i] {
                if j < n && j != i {
                    s -= w * x[j];
                }
            }
            out[i] = s;
        }
    };
    let mut sol = DMatrix::zeros(n, 2);
    for col in 0..2 {
        let mut b = alloc::vec![0.0; n];
        for i in 0..n {
            for &(j, w) in &rows[i] {
                if j >= n && labeled[j - n].1.column() == col {
                    b[i] += w;
                }
            }
        }
        let b_norm = libm::sqrt(b.iter().map(|v| v * v).sum::<f64>());
        let mut x = alloc::vec![0.0; n];
        if b_norm > 0.0 {
            let mut r = b.clone();
            let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
            let mut p = z.clone();
            let mut ap = alloc::vec![0.0; n];
            let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let mut converged = false;
            for _ in 0..(10 * n).max(1000) {
                apply(&p, &mut ap);
                let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
                if pap <= 0.0 {
                    return Err(Error::SingularSystem("conjugate gradient breakdown".into()));
                }
                let alpha = rz / pap;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                let r_norm = libm::sqrt(r.iter().map(|v| v * v).sum::<f64>());
                if r_norm <= 1e-13 * b_norm {
                    converged = true;
                    break;
                }
                for i in 0..n {
                    z[i] = r[i] / diag[i];
                }
                let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
            }
            if !converged {
                return Err(Error::SingularSystem("conjugate gradient did not converge".into()));
            }
        }
        for i in 0..n {
            sol[(i, col)] = x[i];
        }
    }
    Ok(sol)
}

/// Mislabeling probabilities `f_s` of taught examples from the estimate and
/// their revealed labels: `1 − p_s` for `y_s = +1`, `p_s` for `y_s = −1`.
pub fn estimate_f_history(estimate: &HarmonicEstimate, history: &[(usize, Label)]) -> Result<Vec<f64>> {
    history
        .iter()
        .map(|&(i, y)| Ok(f_from_p(estimate.p_clamped(i)?, y)))
        .collect()
}

/// `1/f₋ = 1 + exp(−y wᵀx)`: `1/p` for `y = +1`, `1/(1 − p)` for `y = −1`.
pub fn estimate_inv_f_neg(estimate: &HarmonicEstimate, index: usize, y: Label) -> Result<f64> {
    Ok(inv_f_neg_from_p(estimate.p_clamped(index)?, y))
}

pub fn f_from_p(p: f64, y: Label) -> f64 {
    let p = clamp_p(p);
    match y {
        Label::Pos => 1.0 - p,
        Label::Neg => p,
    }
}

pub fn inv_f_neg_from_p(p: f64, y: Label) -> f64 {
    let p = clamp_p(p);
    match y {
        Label::Pos => 1.0 / p,
        Label::Neg => 1.0 / (1.0 - p),
    }
}

/// Convenience: build the graph from the labeled history and solve it.
pub fn estimate(pool: &TeachingPool, labeled: &[(usize, Label)], sigma: &[f64], sparsity: Sparsity) -> Result<HarmonicEstimate> {
    harmonic_solve(&build_affinity(pool, labeled, sigma, sparsity)?)
}
