//! Exact Mann–Whitney AUROC.

use std::cmp::Ordering;

use crate::scalar::Scalar;

/// Twice the Mann–Whitney U of the positives, with ties counted as one half.
///
/// Returned together with `(n_pos, n_neg)` so callers can form the exact ratio.
pub fn doubled_u<T: Scalar>(scores: &[T], labels: &[bool]) -> (u128, u64, u64) {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    let mut u2: u128 = 0;
    let mut neg_below: u64 = 0;
    let (mut n_pos, mut n_neg) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let (mut pos, mut neg) = (0u64, 0u64);
        for &k in &order[i..j] {
            if labels[k] {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        u2 += pos as u128 * (2 * neg_below as u128 + neg as u128);
        neg_below += neg;
        n_pos += pos;
        n_neg += neg;
        i = j;
    }
    (u2, n_pos, n_neg)
}

/// P(score of a positive > score of a negative) + ½ P(tie).
///
/// `None` when either class is empty: the metric is undefined rather than 0.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[bool]) -> Option<f64> {
    let (u2, p, n) = doubled_u(scores, labels);
    if p == 0 || n == 0 {
        return None;
    }
    Some(u2 as f64 / (2 * p as u128 * n as u128) as f64)
}

/// AUROC over the entries whose label is defined.
pub fn auroc_defined<T: Scalar>(scores: &[T], labels: &[Option<bool>]) -> Option<f64> {
    let (s, l): (Vec<T>, Vec<bool>) = scores
        .iter()
        .zip(labels)
        .filter_map(|(&s, l)| l.map(|y| (s, y)))
        .unzip();
    auroc(&s, &l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_count(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let mut num = 0u64;
        let mut den = 0u64;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    den += 2;
                    num += if si > sj { 2 } else if si == sj { 1 } else { 0 };
                }
            }
        }
        (den > 0).then(|| num as f64 / den as f64)
    }

    #[test]
    fn four_point_example() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let y = [false, false, true, true];
        assert_eq!(auroc(&s, &y), Some(0.75));
    }

    #[test]
    fn separated_ties_and_undefined() {
        assert_eq!(auroc(&[0.1, 0.2, 0.9, 0.95], &[false, false, true, true]), Some(1.0));
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]), Some(0.5));
        assert_eq!(auroc(&[0.1, 0.2], &[true, true]), None);
        assert_eq!(auroc::<f64>(&[], &[]), None);
    }

    #[test]
    fn defined_subset() {
        let s = [0.1, 0.9, 0.5, 0.2];
        let y = [Some(false), Some(true), None, Some(true)];
        assert_eq!(auroc_defined(&s, &y), Some(1.0));
    }

    #[test]
    fn works_for_f32() {
        assert_eq!(auroc(&[0.1f32, 0.4, 0.35, 0.8], &[false, false, true, true]), Some(0.75));
    }

    proptest! {
        #[test]
        fn matches_pair_counting(v in prop::collection::vec((0u8..8, any::<bool>()), 1..50)) {
            let s: Vec<f64> = v.iter().map(|p| p.0 as f64 / 8.0).collect();
            let y: Vec<bool> = v.iter().map(|p| p.1).collect();
            prop_assert_eq!(auroc(&s, &y), pair_count(&s, &y));
        }

        #[test]
        fn label_flip_complements(v in prop::collection::vec((0u8..6, any::<bool>()), 2..40)) {
            let s: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y: Vec<bool> = v.iter().map(|p| p.1).collect();
            let f: Vec<bool> = y.iter().map(|b| !b).collect();
            if let (Some(a), Some(b)) = (auroc(&s, &y), auroc(&s, &f)) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn monotone_transform_invariant(v in prop::collection::vec((-50i32..50, any::<bool>()), 2..40)) {
            let s: Vec<f64> = v.iter().map(|p| p.0 as f64 / 10.0).collect();
            let t: Vec<f64> = s.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            let y: Vec<bool> = v.iter().map(|p| p.1).collect();
            prop_assert_eq!(auroc(&s, &y), auroc(&t, &y));
        }
    }
}
