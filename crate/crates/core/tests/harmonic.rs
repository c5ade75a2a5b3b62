use jedi_core::harmonic::{
    build_affinity, default_bandwidth, estimate, estimate_f_history, estimate_inv_f_neg, harmonic_solve, median_factor,
    AffinityGraph, HarmonicEstimate, Sparsity,
};
use jedi_core::model::{Example, Label, TeachingPool};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random pool of `n` 2D points with both labels and a random labeled subset.
fn random_case(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (TeachingPool, Vec<(usize, Label)>) {
    let ex: Vec<Example> = (0..n)
        .map(|i| {
            let x = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            Example::new(format!("n{i:02}"), x, if i % 2 == 0 { Label::Pos } else { Label::Neg })
        })
        .collect();
    let pool = TeachingPool::new(ex).unwrap();
    let mut labeled = Vec::new();
    while labeled.len() < k {
        let i = rng.random_range(0..n);
        if labeled.iter().all(|(j, _)| *j != i) {
            labeled.push((i, if rng.random::<bool>() { Label::Pos } else { Label::Neg }));
        }
    }
    (pool, labeled)
}

/// Iterate `F_u ← D_uu^{-1}(A_uu F_u + A_ul F_l)` from `F_u = 0` until it
/// stops moving.
fn propagate(g: &AffinityGraph) -> Vec<[f64; 2]> {
    let n = g.pool_size();
    let total = g.node_count();
    let a = g.affinity();
    let fl: Vec<[f64; 2]> = g
        .labeled()
        .iter()
        .map(|(_, l)| if *l == Label::Pos { [1.0, 0.0] } else { [0.0, 1.0] })
        .collect();
    let mut fu = vec![[0.0, 0.0]; n];
    for _ in 0..1_000_000 {
        let mut next = vec![[0.0, 0.0]; n];
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut s = [0.0, 0.0];
            for j in 0..total {
                let w = a.get(i, j);
                let f = if j < n { fu[j] } else { fl[j - n] };
                s[0] += w * f[0];
                s[1] += w * f[1];
            }
            let d = g.degree()[i];
            next[i] = [s[0] / d, s[1] / d];
            delta = delta.max((next[i][0] - fu[i][0]).abs()).max((next[i][1] - fu[i][1]).abs());
        }
        fu = next;
        if delta < 1e-15 {
            break;
        }
    }
    fu
}

#[test]
fn direct_solve_matches_propagation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(2..15);
        let k = rng.random_range(1..=(20 - n).min(n));
        let (pool, labeled) = random_case(&mut rng, n, k);
        let sigma = vec![rng.random_range(0.4..1.0), rng.random_range(0.4..1.0)];
        let g = build_affinity(&pool, &labeled, &sigma, Sparsity::Dense).unwrap();
        assert!(g.node_count() <= 20);
        let est = harmonic_solve(&g).unwrap();
        let oracle = propagate(&g);
        for (a, b) in est.f_u.iter().zip(&oracle) {
            assert!((a[0] - b[0]).abs() < 1e-8, "{a:?} vs {b:?}");
            assert!((a[1] - b[1]).abs() < 1e-8);
            assert!((0.0..=1.0).contains(&a[0]) && (0.0..=1.0).contains(&a[1]));
            assert!((a[0] + a[1] - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn chain_with_opposite_ends_is_even() {
    let pool = TeachingPool::new(vec![
        Example::new("l", vec![0.0], Label::Pos),
        Example::new("u", vec![1.0], Label::Neg),
        Example::new("r", vec![2.0], Label::Neg),
    ])
    .unwrap();
    let est = estimate(&pool, &[(0, Label::Pos), (2, Label::Neg)], &[1.0], Sparsity::Dense).unwrap();
    assert!((est.p(1).unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn raising_positive_neighbor_affinity_never_lowers_p() {
    // unlabeled middle node between a positive and a negative labeled node
    let mut last = 0.0;
    for gap in [3.0, 2.0, 1.5, 1.0, 0.7, 0.4, 0.1] {
        let pool = TeachingPool::new(vec![
            Example::new("u", vec![0.0], Label::Pos),
            Example::new("p", vec![-gap], Label::Pos),
            Example::new("n", vec![1.0], Label::Neg),
        ])
        .unwrap();
        let g = build_affinity(&pool, &[(1, Label::Pos), (2, Label::Neg)], &[1.0], Sparsity::Dense).unwrap();
        let p = harmonic_solve(&g).unwrap().p(0).unwrap();
        assert!(p >= last - 1e-12, "gap {gap}: {p} < {last}");
        last = p;
    }
}

#[test]
fn knn_graph_stays_row_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (pool, labeled) = random_case(&mut rng, 120, 15);
    let sigma = default_bandwidth(&pool, 1.0).unwrap();
    let dense = estimate(&pool, &labeled, &sigma, Sparsity::Dense).unwrap();
    let sparse = estimate(&pool, &labeled, &sigma, Sparsity::Knn(30)).unwrap();
    for (a, b) in dense.f_u.iter().zip(&sparse.f_u) {
        assert!((b[0] + b[1] - 1.0).abs() < 1e-8);
        assert!((0.0..=1.0).contains(&b[0]));
        // a generous k keeps the sparse field close to the dense one
        assert!((a[0] - b[0]).abs() < 0.25);
    }
}

#[test]
fn median_factor_centres_exponents() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (pool, _) = random_case(&mut rng, 80, 1);
    let f = median_factor(&pool).unwrap();
    let sigma = default_bandwidth(&pool, f).unwrap();
    let mut e: Vec<f64> = Vec::new();
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            let (a, b) = (&pool.examples()[i].x, &pool.examples()[j].x);
            e.push((0..2).map(|d| ((a[d] - b[d]) / sigma[d]).powi(2)).sum());
        }
    }
    e.sort_by(f64::total_cmp);
    assert!((e[e.len() / 2] - 1.0).abs() < 0.05);
}

#[test]
fn estimates_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (pool, labeled) = random_case(&mut rng, 30, 6);
    let sigma = default_bandwidth(&pool, 1.0).unwrap();
    let a = estimate(&pool, &labeled, &sigma, Sparsity::Auto).unwrap();
    let b = estimate(&pool, &labeled, &sigma, Sparsity::Auto).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn history_and_inverse_agree(p in 0.0f64..=1.0, pos in any::<bool>()) {
        let y = if pos { Label::Pos } else { Label::Neg };
        let est = HarmonicEstimate::from_probabilities(&[p]);
        let f = estimate_f_history(&est, &[(0, y)]).unwrap()[0];
        let inv = estimate_inv_f_neg(&est, 0, y).unwrap();
        prop_assert!(f > 0.0 && f < 1.0);
        prop_assert!(inv >= 1.0);
        prop_assert!((f - (1.0 - 1.0 / inv)).abs() < 1e-12);
    }
}
