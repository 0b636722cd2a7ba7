use acuity_core::stats::{auroc, bootstrap_ci, two_prop_ztest, wilcoxon_rank_sum};
use proptest::prelude::*;

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..40).prop_flat_map(|n| (prop::collection::vec(0u8..8, n), prop::collection::vec(any::<bool>(), n)))
        .prop_map(|(s, y)| (s.into_iter().map(f64::from).collect(), y))
}

proptest! {
    #[test]
    fn flipping_labels_reflects_auroc((s, y) in scored()) {
        let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
        match (auroc(&s, &y), auroc(&s, &flipped)) {
            (Some(a), Some(b)) => prop_assert_eq!(a + b, 1.0),
            (a, b) => prop_assert!(a.is_none() && b.is_none()),
        }
    }

    #[test]
    fn auroc_ignores_monotone_rescaling((s, y) in scored()) {
        let t: Vec<f64> = s.iter().map(|v| 3.0 * v.exp() - 7.0).collect();
        prop_assert_eq!(auroc(&s, &y), auroc(&t, &y));
    }

    #[test]
    fn rank_sum_p_is_symmetric_and_shift_invariant(
        a in prop::collection::vec(0u8..10, 1..9),
        b in prop::collection::vec(0u8..10, 1..9),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let p = wilcoxon_rank_sum(&a, &b);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(p, wilcoxon_rank_sum(&b, &a));
        let shift = |v: &[f64]| v.iter().map(|x| x + 100.0).collect::<Vec<f64>>();
        prop_assert_eq!(p, wilcoxon_rank_sum(&shift(&a), &shift(&b)));
    }

    #[test]
    fn bootstrap_interval_brackets_a_constant_metric(n in 1usize..30, seed in any::<u64>()) {
        let m = bootstrap_ci(n, |_| Some(0.625), 50, 0.95, seed).unwrap();
        prop_assert_eq!((m.point, m.ci_low, m.ci_high), (0.625, 0.625, 0.625));
    }
}

#[test]
fn large_samples_use_a_sensible_normal_approximation() {
    let a: Vec<f64> = (0..200).map(|i| i as f64).collect();
    let b: Vec<f64> = (0..200).map(|i| i as f64 + 0.5).collect();
    assert!(wilcoxon_rank_sum(&a, &b) > 0.5);
    let c: Vec<f64> = (0..200).map(|i| i as f64 + 150.0).collect();
    assert!(wilcoxon_rank_sum(&a, &c) < 1e-20);
}

#[test]
fn bootstrap_is_seeded() {
    let data: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64).collect();
    let mean = |d: &[usize]| Some(d.iter().map(|&i| data[i]).sum::<f64>() / d.len() as f64);
    let a = bootstrap_ci(data.len(), mean, 300, 0.95, 9).unwrap();
    assert_eq!(a, bootstrap_ci(data.len(), mean, 300, 0.95, 9).unwrap());
    assert_ne!(a, bootstrap_ci(data.len(), mean, 300, 0.95, 10).unwrap());
    assert!(a.ci_low <= a.point && a.point <= a.ci_high);
}

#[test]
fn equal_proportions_give_p_one() {
    assert!((two_prop_ztest(50, 500, 100, 1000).unwrap() - 1.0).abs() < 1e-12);
    assert!(two_prop_ztest(5, 4, 1, 10).is_err());
}
