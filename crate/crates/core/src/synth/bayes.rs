//! Closed-form Bayes-optimal AUROC of the planted latent emissions.
//!
//! Contrasts persistently stable windows (current and next stable) with
//! persistently unstable ones. The latents are unit-variance independent
//! Gaussians whose means differ by `s * (cur + next)` per channel, so the
//! likelihood ratio is linear and the optimal AUROC is `Phi(d / sqrt 2)` with
//! `d` the Mahalanobis distance between the two means.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::mask::{Modality, ModalityMask};

use super::config::{Effect, EmissionModel};

/// Per-channel mean difference at unit signal strength for the modalities in `mask`.
pub fn persistent_shift(model: &EmissionModel, mask: ModalityMask) -> Vec<f64> {
    let d = |e: &Effect| e.cur + e.next;
    let mut v = Vec::new();
    if mask.is_present(Modality::Ehr) {
        v.extend(model.ehr.iter().map(|c| d(&c.effect)));
    }
    if mask.is_present(Modality::Accel) {
        v.extend([model.accel.activity, model.accel.angle, model.accel.frequency].iter().map(d));
    }
    if mask.is_present(Modality::Face) {
        v.extend(model.face.iter().map(|c| d(&c.effect)));
    }
    if mask.is_present(Modality::Env) {
        v.extend([model.env.light, model.env.sound].iter().map(d));
    }
    v
}

pub fn bayes_auroc(model: &EmissionModel, signal_strength: f64, mask: ModalityMask) -> f64 {
    let shift = persistent_shift(model, mask);
    let dist = signal_strength * shift.iter().map(|x| x * x).sum::<f64>().sqrt();
    Normal::standard().cdf(dist / std::f64::consts::SQRT_2)
}
