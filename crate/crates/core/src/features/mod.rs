//! Per-window feature blocks for each modality.

pub mod accel;
pub mod ehr;
pub mod env;
pub mod face;
pub mod normalize;
pub mod table;
pub mod window;

pub use accel::{accel_features, resample_accel, AccelFeatures, AccelSample, AccelStream, ACCEL_FEATURES};
pub use ehr::{EhrSchema, EhrVariable, EhrWindow};
pub use env::{env_features, EnvFeatures, ENV_FEATURES};
pub use face::{au_fractions, FaceFeatures, FACE_FEATURES};
pub use normalize::{fit_normalizer, Normalizer};
pub use window::{build_mask, extract_cohort, extract_patient, ObservationWindow, SplitWindows};
