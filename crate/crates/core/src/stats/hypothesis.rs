//! Two-proportion z-test and Welch's t-test from summary statistics.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Pooled two-proportion z-test, two-sided.
pub fn two_prop_ztest(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<f64> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::StatsInput("two-proportion test needs n1, n2 > 0".into()));
    }
    for (k, n) in [(k1, n1), (k2, n2)] {
        if k > n {
            return Err(Error::CountExceedsTotal { k, n });
        }
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let (p1, p2) = (k1 as f64 / n1f, k2 as f64 / n2f);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if p1 == p2 {
        return Ok(1.0);
    }
    if se == 0.0 {
        return Ok(0.0);
    }
    let z = (p1 - p2).abs() / se;
    Ok((2.0 * Normal::standard().sf(z)).min(1.0))
}

/// Welch–Satterthwaite degrees of freedom.
pub fn welch_df(sd1: f64, n1: f64, sd2: f64, n2: f64) -> f64 {
    let (v1, v2) = (sd1 * sd1 / n1, sd2 * sd2 / n2);
    (v1 + v2).powi(2) / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0))
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_ttest(mean1: f64, sd1: f64, n1: u64, mean2: f64, sd2: f64, n2: u64) -> Result<f64> {
    if n1 < 2 || n2 < 2 {
        return Err(Error::StatsInput("Welch test needs at least two observations per group".into()));
    }
    if !(sd1 >= 0.0 && sd2 >= 0.0) || !mean1.is_finite() || !mean2.is_finite() {
        return Err(Error::StatsInput("Welch test needs finite means and non-negative SDs".into()));
    }
    if mean1 == mean2 {
        return Ok(1.0);
    }
    if sd1 == 0.0 && sd2 == 0.0 {
        return Ok(0.0);
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let se = (sd1 * sd1 / n1f + sd2 * sd2 / n2f).sqrt();
    let t = (mean1 - mean2).abs() / se;
    let df = welch_df(sd1, n1f, sd2, n2f);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::StatsInput(e.to_string()))?;
    Ok((2.0 * dist.sf(t)).min(1.0))
}

/// Sample mean and SD (n - 1 divisor) of a slice.
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    #[test]
    fn face_row_reproduces_reported_p() {
        let p = two_prop_ztest(3741, 33779, 877, 8349).unwrap();
        assert!((p - 0.14).abs() <= 0.01, "{p}");
    }

    #[test]
    fn ztest_edge_cases() {
        assert_eq!(two_prop_ztest(10, 100, 10, 100).unwrap(), 1.0);
        assert_eq!(two_prop_ztest(0, 10, 0, 20).unwrap(), 1.0);
        assert!(two_prop_ztest(50, 100, 10, 100).unwrap() < 0.001);
        assert!(matches!(two_prop_ztest(5, 4, 1, 2), Err(Error::CountExceedsTotal { k: 5, n: 4 })));
        assert!(two_prop_ztest(1, 0, 1, 2).is_err());
    }

    #[test]
    fn ztest_matches_direct_formula() {
        // z = 0.4 / sqrt(0.3 * 0.7 * 0.02) ~ 6.17
        let z = 0.4 / (0.3f64 * 0.7 * 0.02).sqrt();
        assert!((z - 6.17).abs() < 0.01);
        let p = two_prop_ztest(50, 100, 10, 100).unwrap();
        let expect = statrs::function::erf::erfc(z / 2f64.sqrt());
        assert!((p - expect).abs() < 1e-15);
    }

    #[test]
    fn welch_reported_age_row() {
        let p = welch_ttest(66.0, 17.0, 248, 62.0, 17.0, 62).unwrap();
        // Summary statistics are printed rounded, so only the verdict is comparable.
        assert!(p > 0.05, "{p}");
    }

    #[test]
    fn welch_edge_cases() {
        assert_eq!(welch_ttest(3.0, 1.0, 5, 3.0, 2.0, 9).unwrap(), 1.0);
        assert_eq!(welch_ttest(3.0, 0.0, 5, 3.0, 0.0, 9).unwrap(), 1.0);
        assert_eq!(welch_ttest(3.0, 0.0, 5, 4.0, 0.0, 9).unwrap(), 0.0);
        assert!(welch_ttest(3.0, 1.0, 1, 4.0, 1.0, 9).is_err());
        assert!(welch_ttest(3.0, -1.0, 3, 4.0, 1.0, 9).is_err());
    }

    #[test]
    fn planted_age_gap_is_highly_significant() {
        let a: Vec<f64> = (0..60).map(|i| 50.0 + (i % 13) as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 20.0).collect();
        let (m1, s1) = mean_sd(&a);
        let (m2, s2) = mean_sd(&b);
        assert!(welch_ttest(m1, s1, 60, m2, s2, 60).unwrap() < 0.001);
    }

    fn t_density(x: f64, nu: f64) -> f64 {
        let c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
        (c - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp()
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            return left + right + (left + right - whole) / 15.0;
        }
        simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }

    #[test]
    fn small_sample_matches_quadrature_oracle() {
        for &(m1, s1, n1, m2, s2, n2) in &[(5.0, 1.2, 4, 3.1, 0.8, 3), (10.0, 3.0, 5, 6.0, 1.0, 6), (0.2, 0.5, 3, 0.9, 0.4, 3)] {
            let p = welch_ttest(m1, s1, n1, m2, s2, n2).unwrap();
            let se = ((s1 * s1) / n1 as f64 + (s2 * s2) / n2 as f64).sqrt();
            let t = (m1 - m2).abs() / se;
            let nu = welch_df(s1, n1 as f64, s2, n2 as f64);
            let f = |x: f64| t_density(x, nu);
            let whole = t / 6.0 * (f(0.0) + 4.0 * f(t / 2.0) + f(t));
            let central = simpson(&f, 0.0, t, f(0.0), f(t / 2.0), f(t), whole, 1e-13, 50);
            let oracle = 1.0 - 2.0 * central;
            assert!((p - oracle).abs() < 1e-6, "p {p} oracle {oracle}");
        }
    }
}
