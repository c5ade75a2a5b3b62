//! Fitting the target concept the teacher steers toward.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, norm_sq};
use crate::model::{sigmoid, softplus, Concept, TeachingPool};

pub const DEFAULT_L2: f64 = 0.01;
pub const DEFAULT_TARGET_ITERS: usize = 200_000;
const GRAD_TOL: f64 = 1e-6;

/// A step size of `1/L` for the L2-regularized mean logistic loss, using the
/// bound `L ≤ ¼·mean‖x‖² + l2` on its smoothness constant.
pub fn default_target_eta(pool: &TeachingPool, l2: f64) -> f64 {
    let mean_sq = pool.examples().iter().map(|e| norm_sq(&e.x)).sum::<f64>() / pool.len() as f64;
    1.0 / (0.25 * mean_sq + l2)
}

/// `mean_i log(1 + exp(−y_i wᵀx_i)) + (l2/2)‖w‖²`
pub fn regularized_loss(pool: &TeachingPool, w: &[f64], l2: f64) -> f64 {
    let n = pool.len() as f64;
    let data: f64 = pool
        .examples()
        .iter()
        .map(|e| softplus(-e.y.sign() * dot(w, &e.x)))
        .sum::<f64>()
        / n;
    data + 0.5 * l2 * norm_sq(w)
}

fn regularized_gradient(pool: &TeachingPool, w: &[f64], l2: f64, out: &mut [f64]) {
    let n = pool.len() as f64;
    for (o, wi) in out.iter_mut().zip(w) {
        *o = l2 * wi;
    }
    for e in pool.examples() {
        let y = e.y.sign();
        let c = -y * sigmoid(-y * dot(w, &e.x)) / n;
        for (o, xi) in out.iter_mut().zip(&e.x) {
            *o += c * xi;
        }
    }
}

/// Full-batch gradient descent on the L2-regularized logistic loss, from
/// `w = 0`, until the gradient norm drops below `1e−6`.
pub fn train_target_concept(pool: &TeachingPool, eta: f64, iters: usize, l2: f64) -> Result<Concept> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidLearningRate(eta));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::InvalidConfig(alloc::format!("l2 must be non-negative, got {l2}")));
    }
    let m = pool.dimension();
    let mut w: Vec<f64> = alloc::vec![0.0; m];
    let mut g = alloc::vec![0.0; m];
    for _ in 0..iters {
        regularized_gradient(pool, &w, l2, &mut g);
        if norm(&g) < GRAD_TOL {
            return Concept::new(w);
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= eta * gi;
        }
    }
    regularized_gradient(pool, &w, l2, &mut g);
    let grad_norm = norm(&g);
    if grad_norm < GRAD_TOL {
        Concept::new(w)
    } else {
        Err(Error::NonConvergence { grad_norm })
    }
}
