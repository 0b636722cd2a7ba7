//! Observation windows with their feature blocks, mask and labels.

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::labels::LabelSet;
use crate::data::mask::ModalityMask;
use crate::data::record::{seconds_between, PatientRecord};
use crate::data::split::{CohortSplit, SplitName};
use crate::data::windows::segment_windows;
use crate::error::Result;

use super::accel::{window_accel_features, AccelSample, AccelStream};
use super::ehr::{EhrSchema, EhrTimeline, EhrWindow};
use super::env::env_features;
use super::face::au_fractions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub patient_id: String,
    pub window_index: usize,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub ehr: EhrWindow,
    pub accel: Option<Vec<f64>>,
    pub face: Option<Vec<f64>>,
    pub env: Option<Vec<f64>>,
    pub mask: ModalityMask,
    pub labels: LabelSet,
}

impl ObservationWindow {
    /// Recomputes the mask from the blocks currently attached.
    pub fn refresh_mask(&mut self) {
        self.mask = build_mask(self);
    }
}

fn complete(block: &Option<Vec<f64>>) -> bool {
    block.as_ref().is_some_and(|b| !b.is_empty() && b.iter().all(|x| x.is_finite()))
}

/// Bit set iff the modality's block is present and finite; EHR is always set.
pub fn build_mask(w: &ObservationWindow) -> ModalityMask {
    ModalityMask::new(complete(&w.accel), complete(&w.face), complete(&w.env))
}

/// Index range `[lo, hi)` of uniformly spaced samples falling inside `[start, start + len)`.
fn sample_range(series_start: DateTime<Utc>, rate_hz: f64, n: usize, start: DateTime<Utc>, len_s: f64) -> (usize, usize) {
    let offset = seconds_between(series_start, start);
    let idx = |secs: f64| ((secs * rate_hz - 1e-9).ceil().max(0.0) as usize).min(n);
    (idx(offset), idx(offset + len_s))
}

/// Segments a stay and extracts every window's feature blocks.
pub fn extract_patient(patient: &PatientRecord, schema: &EhrSchema, window: Duration) -> Result<Vec<ObservationWindow>> {
    patient.validate()?;
    let timeline = EhrTimeline::new(schema, patient)?;
    let len_s = window.num_milliseconds() as f64 / 1000.0;
    let streams = &patient.streams;
    let mut out = Vec::new();
    for slot in segment_windows(patient, window) {
        let accel_streams: Vec<AccelStream<f64>> = streams
            .accel
            .iter()
            .filter_map(|seg| {
                let (lo, hi) = sample_range(seg.start, seg.rate_hz, seg.samples.len(), slot.start, len_s);
                if hi <= lo {
                    return None;
                }
                let t0 = seconds_between(slot.start, seg.start);
                Some(AccelStream {
                    placement: seg.placement,
                    native_rate: seg.rate_hz,
                    samples: (lo..hi)
                        .map(|i| AccelSample {
                            t: t0 + i as f64 / seg.rate_hz,
                            xyz: seg.samples[i],
                        })
                        .collect(),
                })
            })
            .collect();
        let accel = window_accel_features(&accel_streams)?.map(|f| f.to_vec());

        let mut frames = Vec::new();
        for s in &streams.face {
            let (lo, hi) = sample_range(s.start, s.rate_hz, s.frames.len(), slot.start, len_s);
            frames.extend_from_slice(&s.frames[lo..hi.max(lo)]);
        }
        let face = au_fractions::<f64>(&frames).map(|f| f.to_vec());

        let collect = |series: &[crate::data::record::LevelSeries]| {
            let mut v = Vec::new();
            for s in series {
                let (lo, hi) = sample_range(s.start, 1.0 / s.interval_s, s.values.len(), slot.start, len_s);
                v.extend_from_slice(&s.values[lo..hi.max(lo)]);
            }
            v
        };
        let env = env_features(&collect(&streams.light), &collect(&streams.sound)).map(|f| f.to_vec());

        let mut w = ObservationWindow {
            patient_id: slot.patient_id,
            window_index: slot.window_index,
            start: slot.start,
            end: slot.end,
            ehr: timeline.window(slot.start, window),
            accel,
            face,
            env,
            mask: ModalityMask::EHR_ONLY,
            labels: slot.labels,
        };
        w.refresh_mask();
        out.push(w);
    }
    Ok(out)
}

/// Windows of every patient, in cohort order.
pub fn extract_cohort(cohort: &[PatientRecord], schema: &EhrSchema, window: Duration) -> Result<Vec<ObservationWindow>> {
    let per: Vec<Vec<ObservationWindow>> = cohort
        .par_iter()
        .map(|p| extract_patient(p, schema, window))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Windows grouped by the split of their patient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitWindows {
    pub train: Vec<ObservationWindow>,
    pub val: Vec<ObservationWindow>,
    pub test: Vec<ObservationWindow>,
}

impl SplitWindows {
    /// Windows of patients missing from the split are dropped.
    pub fn partition(windows: Vec<ObservationWindow>, split: &CohortSplit) -> Self {
        let mut out = SplitWindows::default();
        for w in windows {
            match split.assignment(&w.patient_id) {
                Some(SplitName::Train) => out.train.push(w),
                Some(SplitName::Val) => out.val.push(w),
                Some(SplitName::Test) => out.test.push(w),
                None => {}
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(&ObservationWindow) -> ObservationWindow + Sync) -> Self {
        let apply = |ws: &[ObservationWindow]| ws.par_iter().map(&f).collect();
        SplitWindows {
            train: apply(&self.train),
            val: apply(&self.val),
            test: apply(&self.test),
        }
    }
}
