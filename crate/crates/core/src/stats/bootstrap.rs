//! Percentile bootstrap with per-iteration derived seeds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    /// Median of the bootstrap distribution.
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_iterations: usize,
    /// Draws whose metric was undefined and were redrawn.
    pub redraws: usize,
    pub values: Vec<f64>,
}

/// Linearly interpolated percentile of sorted data, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summarises bootstrap values as median plus central `level` interval.
pub fn summarize(values: Vec<f64>, level: f64, redraws: usize) -> MetricResult {
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    MetricResult {
        point: percentile_sorted(&sorted, 0.5),
        ci_low: percentile_sorted(&sorted, tail),
        ci_high: percentile_sorted(&sorted, 1.0 - tail),
        n_iterations: values.len(),
        redraws,
        values,
    }
}

/// Resamples `n_units` units with replacement `iters` times.
///
/// `metric` receives the drawn unit indices and returns `None` when undefined on
/// that draw, in which case the iteration is redrawn from the same stream. Fails
/// once more than half of all attempts were undefined.
pub fn bootstrap_ci<F>(n_units: usize, metric: F, iters: usize, level: f64, seed: u64) -> Result<MetricResult>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    if n_units == 0 || iters == 0 {
        return Err(Error::StatsInput("bootstrap needs at least one unit and one iteration".into()));
    }
    let mut values = Vec::with_capacity(iters);
    let mut failed = 0usize;
    let mut draw = vec![0usize; n_units];
    for it in 0..iters {
        let mut rng = seed::rng(seed, &format!("bootstrap:{it}"));
        loop {
            for d in draw.iter_mut() {
                *d = rng.random_range(0..n_units);
            }
            if let Some(v) = metric(&draw) {
                values.push(v);
                break;
            }
            failed += 1;
            if failed > iters {
                return Err(Error::BootstrapDegenerate {
                    failed,
                    attempts: failed + values.len(),
                });
            }
        }
    }
    if failed > 0 {
        log::debug!("bootstrap redrew {failed} undefined iterations");
    }
    Ok(summarize(values, level, failed))
}
