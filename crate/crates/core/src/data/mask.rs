use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Ehr,
    Accel,
    Face,
    Env,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Ehr, Modality::Accel, Modality::Face, Modality::Env];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Ehr => "ehr",
            Modality::Accel => "accel",
            Modality::Face => "face",
            Modality::Env => "env",
        }
    }
}

/// Presence vector ordered (EHR, Accel, Face, Env). EHR is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModalityMask {
    present: [bool; 4],
}

impl ModalityMask {
    pub const EHR_ONLY: ModalityMask = ModalityMask {
        present: [true, false, false, false],
    };
    pub const ALL: ModalityMask = ModalityMask { present: [true; 4] };

    /// The EHR bit is forced on.
    pub fn new(accel: bool, face: bool, env: bool) -> Self {
        ModalityMask {
            present: [true, accel, face, env],
        }
    }

    /// From the 3 optional-modality bits (bit0 accel, bit1 face, bit2 env).
    pub fn from_optional_bits(bits: u8) -> Self {
        Self::new(bits & 1 != 0, bits & 2 != 0, bits & 4 != 0)
    }

    /// All 8 masks that satisfy the EHR invariant.
    pub fn all_valid() -> impl Iterator<Item = ModalityMask> {
        (0u8..8).map(Self::from_optional_bits)
    }

    pub fn is_present(&self, m: Modality) -> bool {
        self.present[m.index()]
    }

    pub fn bits(&self) -> [bool; 4] {
        self.present
    }

    pub fn as_tuple(&self) -> (u8, u8, u8, u8) {
        let b = |x: bool| x as u8;
        (
            b(self.present[0]),
            b(self.present[1]),
            b(self.present[2]),
            b(self.present[3]),
        )
    }

    pub fn present_positions(&self) -> Vec<usize> {
        (0..4).filter(|&i| self.present[i]).collect()
    }

    pub fn count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    pub fn and(&self, other: &ModalityMask) -> ModalityMask {
        let mut present = [false; 4];
        for (i, p) in present.iter_mut().enumerate() {
            *p = self.present[i] && other.present[i];
        }
        present[0] = true;
        ModalityMask { present }
    }
}

impl std::fmt::Display for ModalityMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (a, b, c, d) = self.as_tuple();
        write!(f, "({a},{b},{c},{d})")
    }
}
