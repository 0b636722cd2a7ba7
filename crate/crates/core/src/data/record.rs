//! Raw per-patient records as stored in the cohort JSON-lines file.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Therapy {
    /// Mechanical ventilation.
    Mv,
    /// Vasopressors.
    Vp,
    /// Massive blood transfusion.
    Bt,
    /// Continuous renal replacement therapy.
    Crrt,
}

impl Therapy {
    pub const ALL: [Therapy; 4] = [Therapy::Mv, Therapy::Vp, Therapy::Bt, Therapy::Crrt];

    pub fn index(self) -> usize {
        match self {
            Therapy::Mv => 0,
            Therapy::Vp => 1,
            Therapy::Bt => 2,
            Therapy::Crrt => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TherapyInterval {
    pub therapy: Therapy,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    DischargedAlive,
    Deceased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    Black,
    White,
    Other,
}

/// Comorbidity flags, in the fixed order of [`StaticEhr::COMORBIDITIES`].
pub const N_COMORBIDITIES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticEhr {
    pub age: f64,
    pub sex: Sex,
    pub race: Race,
    pub comorbidities: [bool; N_COMORBIDITIES],
    /// Charlson Comorbidity Index.
    pub cci: u32,
}

impl StaticEhr {
    pub const COMORBIDITIES: [&'static str; N_COMORBIDITIES] = [
        "cancer",
        "cerebrovascular_disease",
        "dementia",
        "paraplegia_hemiplegia",
        "congestive_heart_failure",
        "copd",
        "diabetes",
        "liver_disease",
        "peptic_ulcer",
        "renal_disease",
    ];

    /// Names of the encoded static vector: age, sex, race one-hot, flags, CCI.
    pub fn feature_names() -> Vec<String> {
        let mut names = vec![
            "age".to_string(),
            "sex_female".to_string(),
            "race_black".to_string(),
            "race_white".to_string(),
            "race_other".to_string(),
        ];
        names.extend(Self::COMORBIDITIES.iter().map(|s| s.to_string()));
        names.push("cci".to_string());
        names
    }

    pub fn encode(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(16);
        v.push(self.age);
        v.push(if self.sex == Sex::Female { 1.0 } else { 0.0 });
        v.push(if self.race == Race::Black { 1.0 } else { 0.0 });
        v.push(if self.race == Race::White { 1.0 } else { 0.0 });
        v.push(if self.race == Race::Other { 1.0 } else { 0.0 });
        v.extend(self.comorbidities.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        v.push(self.cci as f64);
        v
    }
}

pub const STATIC_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Wrist,
    Ankle,
}

/// Hourly (or irregular) EHR observation; `values` follows the cohort's EHR schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrObservation {
    pub time: DateTime<Utc>,
    pub values: Vec<Option<f64>>,
}

/// Uniformly sampled accelerometer recording; sample `i` is at `start + i / rate_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelSegment {
    pub placement: Placement,
    pub start: DateTime<Utc>,
    pub rate_hz: f64,
    /// (ax, ay, az) in g.
    pub samples: Vec<[f64; 3]>,
}

/// Annotated frames; bit `k` of each frame marks activation of AU `k` (order of `FACE_FEATURES`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSession {
    pub start: DateTime<Utc>,
    pub rate_hz: f64,
    pub frames: Vec<u16>,
}

/// Uniform scalar series (light in lux, sound in dB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSeries {
    pub start: DateTime<Utc>,
    pub interval_s: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawStreams {
    pub ehr: Vec<EhrObservation>,
    pub accel: Vec<AccelSegment>,
    pub face: Vec<FaceSession>,
    pub light: Vec<LevelSeries>,
    pub sound: Vec<LevelSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub admission_time: DateTime<Utc>,
    pub discharge_time: DateTime<Utc>,
    pub outcome_at_discharge: Outcome,
    pub therapy_intervals: Vec<TherapyInterval>,
    pub static_ehr: StaticEhr,
    pub streams: RawStreams,
}

impl PatientRecord {
    pub fn stay(&self) -> Duration {
        self.discharge_time - self.admission_time
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidRecord {
                id: self.patient_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.admission_time >= self.discharge_time {
            return bad("admission_time must precede discharge_time");
        }
        for iv in &self.therapy_intervals {
            if iv.start > iv.end {
                return bad("therapy interval ends before it starts");
            }
            if iv.start < self.admission_time || iv.end > self.discharge_time {
                return bad("therapy interval outside the stay");
            }
        }
        if self.static_ehr.age < 18.0 {
            return bad("age below 18");
        }
        for seg in &self.streams.accel {
            if !(seg.rate_hz > 0.0) {
                return bad("accelerometer rate must be positive");
            }
        }
        Ok(())
    }

    /// Which therapies overlap `[start, end)`.
    pub fn therapies_in(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> TherapyFlags {
        let mut flags = TherapyFlags::default();
        for iv in &self.therapy_intervals {
            if iv.start < end && iv.end > start {
                flags.0[iv.therapy.index()] = true;
            }
        }
        flags
    }
}

/// Presence of (MV, VP, BT, CRRT) over an interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TherapyFlags(pub [bool; 4]);

impl TherapyFlags {
    pub fn has(&self, t: Therapy) -> bool {
        self.0[t.index()]
    }

    pub fn from_bits(bits: u8) -> Self {
        TherapyFlags([bits & 1 != 0, bits & 2 != 0, bits & 4 != 0, bits & 8 != 0])
    }
}

/// Offset in seconds of `t` from `origin`, with sub-second precision.
pub fn seconds_between(origin: DateTime<Utc>, t: DateTime<Utc>) -> f64 {
    let d = t - origin;
    d.num_milliseconds() as f64 / 1000.0
}

pub fn add_seconds(t: DateTime<Utc>, secs: f64) -> DateTime<Utc> {
    t + Duration::milliseconds((secs * 1000.0).round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn minimal(adm_h: i64, dis_h: i64) -> PatientRecord {
        let t0 = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
        PatientRecord {
            patient_id: "p".into(),
            admission_time: t0 + Duration::hours(adm_h),
            discharge_time: t0 + Duration::hours(dis_h),
            outcome_at_discharge: Outcome::DischargedAlive,
            therapy_intervals: vec![],
            static_ehr: StaticEhr {
                age: 60.0,
                sex: Sex::Male,
                race: Race::White,
                comorbidities: [false; N_COMORBIDITIES],
                cci: 0,
            },
            streams: RawStreams::default(),
        }
    }

    #[test]
    fn rejects_inverted_stay() {
        assert!(minimal(5, 5).validate().is_err());
        assert!(minimal(0, 5).validate().is_ok());
    }

    #[test]
    fn static_encoding_has_fixed_width() {
        let p = minimal(0, 5);
        assert_eq!(p.static_ehr.encode().len(), STATIC_DIM);
        assert_eq!(StaticEhr::feature_names().len(), STATIC_DIM);
    }

    #[test]
    fn json_round_trip_uses_iso_timestamps() {
        let p = minimal(0, 5);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("2023-01-01T00:00:00Z"));
        let back: PatientRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
