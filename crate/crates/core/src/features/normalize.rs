//! Min-max scaling fitted on training windows only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::window::ObservationWindow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    const EMPTY: FeatureRange = FeatureRange {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };

    fn observe(&mut self, x: f64) {
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    fn settle(&mut self) {
        if self.min > self.max {
            // never observed
            *self = FeatureRange { min: 0.0, max: 0.0 };
        }
    }

    /// Degenerate ranges map to 0; values outside the fitted range are clamped.
    pub fn scale(&self, x: f64) -> f64 {
        if self.max > self.min {
            ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    /// One range per EHR variable, shared across time steps.
    pub ehr_temporal: Vec<FeatureRange>,
    pub ehr_static: Vec<FeatureRange>,
    pub accel: Vec<FeatureRange>,
    pub face: Vec<FeatureRange>,
    pub env: Vec<FeatureRange>,
}

fn fit_block<'a>(dim: usize, blocks: impl Iterator<Item = &'a Vec<f64>>) -> Vec<FeatureRange> {
    let mut ranges = vec![FeatureRange::EMPTY; dim];
    for b in blocks {
        for (r, &x) in ranges.iter_mut().zip(b) {
            r.observe(x);
        }
    }
    ranges.iter_mut().for_each(FeatureRange::settle);
    ranges
}

fn scale_block(ranges: &[FeatureRange], block: &[f64]) -> Vec<f64> {
    block.iter().zip(ranges).map(|(&x, r)| r.scale(x)).collect()
}

/// Fits per-feature ranges on training windows; absent blocks are skipped.
pub fn fit_normalizer(train: &[ObservationWindow], n_ehr_vars: usize) -> Result<Normalizer> {
    let first = train.first().ok_or(Error::EmptyTrainingSet)?;
    let mut ehr_temporal = vec![FeatureRange::EMPTY; n_ehr_vars];
    for w in train {
        for (i, &x) in w.ehr.temporal.iter().enumerate() {
            ehr_temporal[i % n_ehr_vars].observe(x);
        }
    }
    ehr_temporal.iter_mut().for_each(FeatureRange::settle);
    Ok(Normalizer {
        ehr_temporal,
        ehr_static: fit_block(first.ehr.static_.len(), train.iter().map(|w| &w.ehr.static_)),
        accel: fit_block(6, train.iter().filter_map(|w| w.accel.as_ref())),
        face: fit_block(9, train.iter().filter_map(|w| w.face.as_ref())),
        env: fit_block(4, train.iter().filter_map(|w| w.env.as_ref())),
    })
}

impl Normalizer {
    pub fn apply(&self, w: &ObservationWindow) -> ObservationWindow {
        let n = self.ehr_temporal.len();
        let mut out = w.clone();
        for (i, x) in out.ehr.temporal.iter_mut().enumerate() {
            *x = self.ehr_temporal[i % n].scale(*x);
        }
        out.ehr.static_ = scale_block(&self.ehr_static, &w.ehr.static_);
        out.accel = w.accel.as_ref().map(|b| scale_block(&self.accel, b));
        out.face = w.face.as_ref().map(|b| scale_block(&self.face, b));
        out.env = w.env.as_ref().map(|b| scale_block(&self.env, b));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::labels::LabelSet;
    use crate::data::mask::ModalityMask;
    use crate::features::ehr::EhrWindow;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn window(temporal: Vec<f64>, accel: Option<Vec<f64>>) -> ObservationWindow {
        let t = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
        ObservationWindow {
            patient_id: "n".into(),
            window_index: 0,
            start: t,
            end: t,
            ehr: EhrWindow { temporal, static_: vec![5.0] },
            accel,
            face: None,
            env: None,
            mask: ModalityMask::EHR_ONLY,
            labels: LabelSet::UNDEFINED,
        }
    }

    #[test]
    fn midpoint_degenerate_and_clamped() {
        let train: Vec<_> = [2.0, 4.0, 6.0].iter().map(|&x| window(vec![x], Some(vec![x; 6]))).collect();
        let n = fit_normalizer(&train, 1).unwrap();
        let out = n.apply(&window(vec![4.0], Some(vec![10.0; 6])));
        assert_eq!(out.ehr.temporal, vec![0.5]);
        // constant static feature
        assert_eq!(out.ehr.static_, vec![0.0]);
        assert_eq!(out.accel.unwrap()[0], 1.0);
        assert_eq!(n.apply(&window(vec![-3.0], None)).ehr.temporal, vec![0.0]);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(matches!(fit_normalizer(&[], 1), Err(Error::EmptyTrainingSet)));
    }

    proptest! {
        #[test]
        fn outputs_stay_in_unit_interval(
            train in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 2), 1..30),
            probe in proptest::collection::vec(-1e4f64..1e4, 2),
        ) {
            let ws: Vec<_> = train.into_iter().map(|t| window(t, None)).collect();
            let n = fit_normalizer(&ws, 1).unwrap();
            for w in ws.iter().chain(std::iter::once(&window(probe, None))) {
                for x in n.apply(w).ehr.temporal {
                    prop_assert!((0.0..=1.0).contains(&x));
                }
            }
        }
    }
}
