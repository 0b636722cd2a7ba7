//! Tiling a stay into fixed observation windows, each labelled from the window after it.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::labels::{make_labels, LabelSet, PredictionWindow, TerminalEvent};
use super::record::{Outcome, PatientRecord, TherapyFlags};

pub const DEFAULT_WINDOW_HOURS: i64 = 4;

/// One observation window before features are attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSlot {
    pub patient_id: String,
    pub window_index: usize,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub therapies: TherapyFlags,
    pub labels: LabelSet,
}

/// `floor(stay / window)` full windows from admission; a trailing partial interval is dropped.
pub fn segment_windows(patient: &PatientRecord, window: Duration) -> Vec<WindowSlot> {
    assert!(window > Duration::zero(), "window length must be positive");
    let stay = patient.stay();
    if stay < window {
        return Vec::new();
    }
    let count = (stay.num_milliseconds() / window.num_milliseconds()) as usize;
    let window_at = |k: usize| {
        let start = patient.admission_time + window * k as i32;
        (start, start + window)
    };
    (0..count)
        .map(|k| {
            let (start, end) = window_at(k);
            let therapies = patient.therapies_in(start, end);
            let (ps, pe) = window_at(k + 1);
            let next = prediction_window(patient, ps, pe);
            WindowSlot {
                patient_id: patient.patient_id.clone(),
                window_index: k,
                start,
                end,
                therapies,
                labels: make_labels(therapies, next),
            }
        })
        .collect()
}

fn prediction_window(p: &PatientRecord, start: DateTime<Utc>, end: DateTime<Utc>) -> PredictionWindow {
    let d = p.discharge_time;
    if d < start {
        PredictionWindow::AfterStay
    } else if d < end {
        PredictionWindow::Terminal(match p.outcome_at_discharge {
            Outcome::DischargedAlive => TerminalEvent::Discharge,
            Outcome::Deceased => TerminalEvent::Death,
        })
    } else {
        PredictionWindow::InStay(p.therapies_in(start, end))
    }
}
