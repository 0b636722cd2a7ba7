//! The six modality combinations compared in the experiments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::mask::ModalityMask;
use crate::error::Error;
use crate::features::window::ObservationWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Arm {
    Ehr,
    EhrAccel,
    EhrFace,
    EhrEnv,
    EhrAccelFace,
    All,
}

impl Arm {
    pub const ALL: [Arm; 6] = [Arm::Ehr, Arm::EhrAccel, Arm::EhrFace, Arm::EhrEnv, Arm::EhrAccelFace, Arm::All];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Ehr => "ehr",
            Arm::EhrAccel => "ehr+accel",
            Arm::EhrFace => "ehr+face",
            Arm::EhrEnv => "ehr+env",
            Arm::EhrAccelFace => "ehr+accel+face",
            Arm::All => "all",
        }
    }

    /// Modalities the arm may read.
    pub fn mask(self) -> ModalityMask {
        match self {
            Arm::Ehr => ModalityMask::EHR_ONLY,
            Arm::EhrAccel => ModalityMask::new(true, false, false),
            Arm::EhrFace => ModalityMask::new(false, true, false),
            Arm::EhrEnv => ModalityMask::new(false, false, true),
            Arm::EhrAccelFace => ModalityMask::new(true, true, false),
            Arm::All => ModalityMask::ALL,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown arm {s:?}; expected one of ehr, ehr+accel, ehr+face, ehr+env, ehr+accel+face, all")))
    }
}

impl TryFrom<String> for Arm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<Arm> for String {
    fn from(a: Arm) -> String {
        a.name().to_string()
    }
}

/// Forces modalities outside `arm` absent: the mask is ANDed with the arm mask and
/// dropped blocks are removed so nothing downstream can read them.
pub fn experiment_arm_filter(window: &ObservationWindow, arm: Arm) -> ObservationWindow {
    let mut w = window.clone();
    let mask = w.mask.and(&arm.mask());
    let keep = mask.bits();
    if !keep[1] {
        w.accel = None;
    }
    if !keep[2] {
        w.face = None;
    }
    if !keep[3] {
        w.env = None;
    }
    w.mask = mask;
    w
}
