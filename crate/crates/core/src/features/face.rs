//! Per-window action-unit presence fractions.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub const FACE_FEATURES: [&str; 9] = ["au1", "au2", "au6", "au7", "au10", "au12", "au25", "au26", "au43"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceFeatures<T> {
    pub fractions: [T; 9],
}

impl<T: Scalar> FaceFeatures<T> {
    pub fn to_vec(&self) -> Vec<T> {
        self.fractions.to_vec()
    }
}

/// Fraction of frames in which each AU is active. `frames` are bitmasks
/// (bit `k` = AU `k` in [`FACE_FEATURES`] order); `None` with no frames.
pub fn au_fractions<T: Scalar>(frames: &[u16]) -> Option<FaceFeatures<T>> {
    if frames.is_empty() {
        return None;
    }
    let mut counts = [0usize; 9];
    for &f in frames {
        for (k, c) in counts.iter_mut().enumerate() {
            if f & (1 << k) != 0 {
                *c += 1;
            }
        }
    }
    let total = T::of_usize(frames.len());
    Some(FaceFeatures {
        fractions: counts.map(|c| T::of_usize(c) / total),
    })
}

pub fn pack_frame(active: [bool; 9]) -> u16 {
    active
        .iter()
        .enumerate()
        .fold(0u16, |acc, (k, &a)| if a { acc | (1 << k) } else { acc })
}
