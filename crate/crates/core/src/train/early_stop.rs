//! Patience-based early stopping over a maximized validation metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best metric. An epoch improves only if its metric is strictly greater
/// than the best so far; an undefined (`None` or NaN) metric never improves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: Option<(usize, f64)>,
    pub since_improvement: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(EarlyStopper {
            patience,
            best: None,
            since_improvement: 0,
        })
    }

    pub fn observe(&mut self, epoch: usize, metric: Option<f64>) -> Verdict {
        let better = match (metric, self.best) {
            (Some(m), _) if m.is_nan() => false,
            (Some(_), None) => true,
            (Some(m), Some((_, b))) => m > b,
            (None, _) => false,
        };
        if better {
            self.best = Some((epoch, metric.expect("checked")));
            self.since_improvement = 0;
            Verdict::Improved
        } else {
            self.since_improvement += 1;
            if self.since_improvement >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopOutcome {
    /// Last epoch run (1-based).
    pub stopped_epoch: usize,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub early_stopped: bool,
}

/// Runs `epoch(e)` for `e = 1..=max_epochs`, each returning the validation metric,
/// until patience runs out. `on_verdict` sees every epoch's verdict, so callers can
/// snapshot parameters when it is `Improved`.
pub fn run_epochs<F, G>(max_epochs: usize, patience: usize, mut epoch: F, mut on_verdict: G) -> Result<StopOutcome>
where
    F: FnMut(usize) -> Result<Option<f64>>,
    G: FnMut(usize, Verdict, &EarlyStopper) -> Result<()>,
{
    let mut stopper = EarlyStopper::new(patience)?;
    let mut last = 0;
    let mut early = false;
    for e in 1..=max_epochs {
        let metric = epoch(e)?;
        let verdict = stopper.observe(e, metric);
        on_verdict(e, verdict, &stopper)?;
        last = e;
        if verdict == Verdict::Stop {
            early = true;
            break;
        }
    }
    Ok(StopOutcome {
        stopped_epoch: last,
        best_epoch: stopper.best.map(|b| b.0),
        best_metric: stopper.best.map(|b| b.1),
        early_stopped: early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(trace: &[f64], max: usize) -> StopOutcome {
        run_epochs(max, 10, |e| Ok(trace.get(e - 1).copied()), |_, _, _| Ok(())).unwrap()
    }

    #[test]
    fn improvement_only_at_first_epoch_stops_at_eleven() {
        let trace = vec![0.6; 50].into_iter().enumerate().map(|(i, x)| if i == 0 { 0.8 } else { x }).collect::<Vec<_>>();
        let o = run(&trace, 50);
        assert_eq!((o.stopped_epoch, o.best_epoch, o.early_stopped), (11, Some(1), true));
    }

    #[test]
    fn monotone_improvement_runs_to_max() {
        let trace: Vec<f64> = (0..20).map(|i| 0.5 + i as f64 * 0.01).collect();
        let o = run(&trace, 20);
        assert_eq!((o.stopped_epoch, o.best_epoch, o.early_stopped), (20, Some(20), false));
    }

    #[test]
    fn ties_and_nan_do_not_reset_patience() {
        let mut s = EarlyStopper::new(2).unwrap();
        assert_eq!(s.observe(1, Some(0.7)), Verdict::Improved);
        assert_eq!(s.observe(2, Some(0.7)), Verdict::Continue);
        assert_eq!(s.observe(3, Some(f64::NAN)), Verdict::Stop);
        assert!(EarlyStopper::new(0).is_err());
    }
}
