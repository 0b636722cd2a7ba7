//! Two-sided Wilcoxon rank-sum test.
//!
//! Small samples (pooled size at most [`EXACT_MAX_N`]) use the exact permutation
//! distribution of the rank sum, ties included. Larger samples use the normal
//! approximation with tie and continuity corrections.

use statrs::distribution::{ContinuousCDF, Normal};

pub const EXACT_MAX_N: usize = 12;

/// Mid-ranks of the pooled sample, doubled so tied ranks stay integral.
fn doubled_ranks(pooled: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        // Positions i+1 ..= j share the mean rank (i + 1 + j) / 2.
        let r2 = (i + 1 + j) as u64;
        for &k in &order[i..j] {
            ranks[k] = r2;
        }
        ties.push((j - i) as u64);
        i = j;
    }
    (ranks, ties)
}

fn exact_p(ranks: &[u64], n1: usize, observed: u64) -> f64 {
    let n = ranks.len();
    let center = n1 as i128 * (n as i128 + 1); // doubled expectation of the rank sum
    let dev = (observed as i128 - center).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    // Walk every n1-subset in lexicographic order.
    let mut idx: Vec<usize> = (0..n1).collect();
    loop {
        let s: u64 = idx.iter().map(|&i| ranks[i]).sum();
        total += 1;
        if (s as i128 - center).abs() >= dev {
            extreme += 1;
        }
        let mut k = n1;
        loop {
            if k == 0 {
                return extreme as f64 / total as f64;
            }
            k -= 1;
            if idx[k] < n - n1 + k {
                break;
            }
        }
        idx[k] += 1;
        for m in k + 1..n1 {
            idx[m] = idx[m - 1] + 1;
        }
    }
}

/// Two-sided p-value for H0: `a` and `b` come from the same distribution.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "rank-sum test needs two non-empty samples");
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_ranks(&pooled);
    let w2: u64 = ranks[..n1].iter().sum();
    let n = n1 + n2;
    if n <= EXACT_MAX_N {
        return exact_p(&ranks, n1, w2);
    }

    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = w2 as f64 / 2.0 - n1f * (n1f + 1.0) / 2.0;
    let mu = n1f * n2f / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term);
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * normal.sf(z)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_samples_give_one() {
        let a = [0.3, 0.7, 0.1, 0.9];
        assert_eq!(wilcoxon_rank_sum(&a, &a), 1.0);
        let big: Vec<f64> = (0..100).map(|i| (i as f64).sqrt()).collect();
        assert_eq!(wilcoxon_rank_sum(&big, &big), 1.0);
    }

    #[test]
    fn three_versus_three_separated() {
        let p = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]);
        assert!((p - 0.1).abs() < 1e-15, "{p}");
    }

    #[test]
    fn all_tied_is_one() {
        assert_eq!(wilcoxon_rank_sum(&[2.0; 3], &[2.0; 4]), 1.0);
        assert_eq!(wilcoxon_rank_sum(&[2.0; 30], &[2.0; 40]), 1.0);
    }

    #[test]
    fn shifted_large_samples_are_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.random::<f64>() + 0.3).collect();
        let p = wilcoxon_rank_sum(&a, &b);
        assert!(p < 0.001, "{p}");

        // Permutation oracle on the difference in mean ranks.
        let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        let stat = |xs: &[f64]| xs[..100].iter().sum::<f64>() - xs[100..].iter().sum::<f64>();
        let (ranks, _) = doubled_ranks(&pooled);
        let rf: Vec<f64> = ranks.iter().map(|&r| r as f64).collect();
        let obs = stat(&rf).abs();
        let mut perm = rf.clone();
        let mut hits = 0;
        for _ in 0..2000 {
            for i in (1..perm.len()).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            if stat(&perm).abs() >= obs {
                hits += 1;
            }
        }
        assert_eq!(hits, 0);
    }

    #[test]
    fn normal_approximation_tracks_exact_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for shift in [0.0, 0.3, 0.8] {
            let a: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..7).map(|_| rng.random::<f64>() + shift).collect();
            let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            let (ranks, _) = doubled_ranks(&pooled);
            let exact = exact_p(&ranks, 7, ranks[..7].iter().sum());
            let approx = wilcoxon_rank_sum(&a, &b);
            assert!((exact - approx).abs() < 0.03, "exact {exact} approx {approx}");
        }
    }
}
