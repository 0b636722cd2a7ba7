//! Cohort data model: records, windows, masks, labels and splits.

pub mod io;
pub mod labels;
pub mod mask;
pub mod record;
pub mod split;
pub mod windows;

pub use labels::{acuity_state, make_labels, AcuityState, Head, LabelSet, PredictionWindow, TaskFamily, TerminalEvent, N_HEADS};
pub use mask::{Modality, ModalityMask};
pub use record::{PatientRecord, StaticEhr, Therapy, TherapyFlags, TherapyInterval};
pub use split::{split_cohort, CohortSplit, SplitName};
pub use windows::{segment_windows, WindowSlot, DEFAULT_WINDOW_HOURS};
