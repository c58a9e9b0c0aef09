use approx::assert_relative_eq;
use diachron::analysis::{compute_drift, drift_histogram, kendall_trend, quantile, DriftSeries};
use diachron::corpus::{holdout_assignment, Split};
use diachron::drift_reg::{drift_regularizer, drift_regularizer_gradient, hardshrink};
use diachron::dsg::combine_priors;
use diachron::model::{log_sigmoid, sigmoid, EmbeddingMatrix, Role};
use diachron::{Execution, ModelKind};
use proptest::prelude::*;

fn matrix(rows: usize, dim: usize) -> impl Strategy<Value = EmbeddingMatrix> {
    prop::collection::vec(-3.0f64..3.0, rows * dim)
        .prop_map(move |data| EmbeddingMatrix::from_vec(rows, dim, data, Role::Word).unwrap())
}

fn slices(n: usize, rows: usize, dim: usize) -> impl Strategy<Value = Vec<EmbeddingMatrix>> {
    prop::collection::vec(matrix(rows, dim), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigmoid_is_stable(x in -800.0f64..800.0) {
        let s = sigmoid(x);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!(log_sigmoid(x).is_finite());
        prop_assert!(log_sigmoid(x) <= 0.0);
        assert_relative_eq!(sigmoid(x) + sigmoid(-x), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn drift_is_a_metric(a in matrix(6, 3), b in matrix(6, 3), c in matrix(6, 3)) {
        let ab = compute_drift(&a, &b);
        let ba = compute_drift(&b, &a);
        let ac = compute_drift(&a, &c);
        let cb = compute_drift(&c, &b);
        for i in 0..6 {
            prop_assert!(ab[i] >= 0.0);
            prop_assert_eq!(ab[i], ba[i]);
            prop_assert!(ab[i] <= ac[i] + cb[i] + 1e-12);
        }
        prop_assert!(compute_drift(&a, &a).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn histogram_conserves_words(ms in slices(4, 9, 2), bins in 1usize..40, t0 in 0usize..4) {
        let refs: Vec<&EmbeddingMatrix> = ms.iter().collect();
        let series = DriftSeries::from_matrices(&refs, t0, ModelKind::Dbe, Execution::Sequential).unwrap();
        prop_assert!(series.at(t0).iter().all(|&d| d == 0.0));
        let h = drift_histogram(&series, bins).unwrap();
        prop_assert_eq!(h.edges.len(), bins + 1);
        prop_assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
        for (t, counts) in &h.counts {
            prop_assert_ne!(*t, t0);
            prop_assert_eq!(counts.iter().sum::<u64>(), 9);
        }
    }

    #[test]
    fn parallel_drift_matches_sequential(ms in slices(3, 40, 4)) {
        let refs: Vec<&EmbeddingMatrix> = ms.iter().collect();
        let seq = DriftSeries::from_matrices(&refs, 0, ModelKind::Isg, Execution::Sequential).unwrap();
        let par = DriftSeries::from_matrices(&refs, 0, ModelKind::Isg, Execution::Parallel).unwrap();
        prop_assert_eq!(seq.values, par.values);
    }

    #[test]
    fn kendall_is_bounded_and_antisymmetric(xs in prop::collection::vec(-5.0f64..5.0, 2..12)) {
        let k = kendall_trend(&xs);
        prop_assert!((-1.0..=1.0).contains(&k));
        let rev: Vec<f64> = xs.iter().rev().cloned().collect();
        assert_relative_eq!(kendall_trend(&rev), -k, epsilon = 1e-12);
    }

    #[test]
    fn quantile_is_monotone(xs in prop::collection::vec(0.0f64..10.0, 1..50), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile(&xs, lo) <= quantile(&xs, hi));
        let max = xs.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(quantile(&xs, 1.0) == max);
    }

    #[test]
    fn regularizer_is_nonnegative_and_silent_below_beta(
        a in matrix(5, 3), b in matrix(5, 3), alpha in 0.0f64..5.0, beta in 0.0f64..4.0,
    ) {
        prop_assert!(drift_regularizer(&a, &b, alpha, beta) >= 0.0);
        let drift = compute_drift(&a, &b);
        let g = drift_regularizer_gradient(&a, &b, alpha, beta);
        for (i, d) in drift.iter().enumerate() {
            if *d <= beta {
                prop_assert!(g[i * 3..i * 3 + 3].iter().all(|&x| x == 0.0));
                prop_assert_eq!(hardshrink(*d, beta), 0.0);
            }
        }
    }

    #[test]
    fn combined_prior_shrinks(ms in matrix(4, 3), d in 0.01f64..10.0, d0 in 0.01f64..10.0) {
        let p = combine_priors(&ms, d, d0);
        let v = d * d0 / (d + d0);
        for (m, pm) in ms.as_slice().iter().zip(p.mean.as_slice()) {
            assert_relative_eq!(*pm, m * d0 / (d + d0), epsilon = 1e-12);
        }
        prop_assert!(p.variance.as_slice().iter().all(|x| (x - v).abs() < 1e-12));
    }

    #[test]
    fn holdout_tags_every_document(sizes in prop::collection::vec(20usize..60, 1..6), f in 0.1f64..0.5, seed in 0u64..100) {
        let tags = holdout_assignment(&sizes, f, seed).unwrap();
        prop_assert_eq!(tags.iter().map(Vec::len).collect::<Vec<_>>(), sizes.clone());
        prop_assert_eq!(&tags, &holdout_assignment(&sizes, f, seed).unwrap());
        for (t, n) in sizes.iter().enumerate() {
            let held = tags[t].iter().filter(|s| **s != Split::Train).count();
            prop_assert_eq!(held, (*n as f64 * f).round() as usize);
            prop_assert!(tags[t].contains(&Split::Valid) && tags[t].contains(&Split::Test));
        }
    }

    #[test]
    fn holdout_rejects_tiny_slices(n in 0usize..3, f in 0.01f64..0.99) {
        prop_assert!(holdout_assignment(&[n], f, 0).is_err());
    }
}
