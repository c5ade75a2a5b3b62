use approx::assert_relative_eq;
use jedi_core::model::{incorrect_prob, logistic_loss, loss_gradient, memory_window, Concept, EtaSchedule, Label, LearnerState};
use jedi_core::rng::{stream_rng, Stream};
use proptest::prelude::*;

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Pos), Just(Label::Neg)]
}

fn vec_of(m: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, m)
}

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn momentum_matches_unrolled_sum(
        (w0, xs) in (1usize..6).prop_flat_map(|m| (vec_of(m, 2.0), prop::collection::vec((vec_of(m, 2.0), label()), 1..20))),
        beta in 0.0f64..0.99,
        eta0 in 0.001f64..0.5,
        c in 1.0f64..50.0,
    ) {
        let schedule = EtaSchedule::Decay { eta0, c };
        let mut rng = stream_rng(0, Stream::Noise);
        let mut s = LearnerState::new(Concept(w0.clone()), beta, schedule.clone(), 0.0).unwrap();
        let mut ws = vec![w0.clone()];
        for (t, (x, y)) in xs.iter().enumerate() {
            s = s.update(x, *y, schedule.eta(t + 1), &mut rng).unwrap();
            ws.push(s.w.0.clone());
        }
        // gradients from the recorded trajectory, then the closed form
        // w_t = w_0 − Σ_s g_s Σ_{k=s}^{t} η_k β^{k−s}
        let t = xs.len();
        let m = w0.len();
        let g: Vec<Vec<f64>> = xs.iter().enumerate().map(|(k, (x, y))| {
            let z: f64 = ws[k].iter().zip(x).map(|(a, b)| a * b).sum();
            let f = sig(-y.sign() * z);
            x.iter().map(|v| -y.sign() * f * v).collect()
        }).collect();
        let mut w = w0.clone();
        let mut v = vec![0.0; m];
        for s_ in 1..=t {
            let weight: f64 = (s_..=t).map(|k| schedule.eta(k) * beta.powi((k - s_) as i32)).sum();
            for j in 0..m {
                w[j] -= weight * g[s_ - 1][j];
                v[j] += beta.powi((t - s_) as i32) * g[s_ - 1][j];
            }
        }
        for j in 0..m {
            prop_assert!((w[j] - s.w.0[j]).abs() < 1e-10, "w[{j}] {} vs {}", w[j], s.w.0[j]);
            prop_assert!((v[j] - s.v[j]).abs() < 1e-10);
        }
        prop_assert_eq!(s.step, t);
    }

    #[test]
    fn gradient_matches_central_differences(
        (w, x) in (1usize..8).prop_flat_map(|m| (vec_of(m, 2.0), vec_of(m, 2.0))),
        y in label(),
    ) {
        let g = loss_gradient(&Concept(w.clone()), &x, y).unwrap();
        let h = 1e-6;
        for j in 0..w.len() {
            let mut a = w.clone();
            let mut b = w.clone();
            a[j] += h;
            b[j] -= h;
            let fd = (logistic_loss(&Concept(a), &x, y).unwrap() - logistic_loss(&Concept(b), &x, y).unwrap()) / (2.0 * h);
            let scale = g[j].abs().max(1e-3);
            prop_assert!((fd - g[j]).abs() / scale < 1e-5, "coord {j}: fd {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn probabilities_of_both_labels_sum_to_one(
        (w, x) in (1usize..8).prop_flat_map(|m| (vec_of(m, 5.0), vec_of(m, 5.0))),
    ) {
        let w = Concept(w);
        let f = incorrect_prob(&w, &x, Label::Pos).unwrap() + incorrect_prob(&w, &x, Label::Neg).unwrap();
        prop_assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_sphere_gradient_norm_is_difficulty(
        (w, x) in (1usize..8).prop_flat_map(|m| (vec_of(m, 3.0), vec_of(m, 1.0))),
        y in label(),
    ) {
        let n: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let x: Vec<f64> = x.iter().map(|v| v / n).collect();
        let w = Concept(w);
        let g = loss_gradient(&w, &x, y).unwrap();
        let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((gn - incorrect_prob(&w, &x, y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn loss_is_positive_and_finite(
        (w, x) in (1usize..8).prop_flat_map(|m| (vec_of(m, 100.0), vec_of(m, 100.0))),
        y in label(),
    ) {
        let l = logistic_loss(&Concept(w), &x, y).unwrap();
        prop_assert!(l > 0.0 && l.is_finite());
    }
}

#[test]
fn noise_is_seeded() {
    let s = LearnerState::new(Concept(vec![0.0, 0.0]), 0.5, EtaSchedule::default(), 0.1).unwrap();
    let a = s.update(&[1.0, 0.0], Label::Pos, 0.1, &mut stream_rng(4, Stream::Noise)).unwrap();
    let b = s.update(&[1.0, 0.0], Label::Pos, 0.1, &mut stream_rng(4, Stream::Noise)).unwrap();
    let c = s.update(&[1.0, 0.0], Label::Pos, 0.1, &mut stream_rng(5, Stream::Noise)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.w, c.w);
}

#[test]
fn memory_windows_of_synthetic_learners() {
    assert_relative_eq!(memory_window(0.5).unwrap(), 2.0);
    assert_relative_eq!(memory_window(0.75).unwrap(), 4.0);
    assert_relative_eq!(memory_window(0.875).unwrap(), 8.0);
    assert!(memory_window(0.999).unwrap() > 999.0);
    assert!(memory_window(1.0).is_err());
}
