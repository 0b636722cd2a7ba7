//! Declarative generator configuration with a versioned, documented schema.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ehr::{EhrCategory, EhrSchema, EhrVariable};

pub const GEN_CONFIG_VERSION: &str = "acuity-gen/1";

/// Effect of the latent state on one standardized emission channel.
///
/// The channel's per-window latent is `N(s * (cur * u_t + next * u_{t+1}), 1)`
/// where `u_t` is 1 when window `t` is unstable and `s` is the signal strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub cur: f64,
    pub next: f64,
}

const fn fx(cur: f64, next: f64) -> Effect {
    Effect { cur, next }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrChannel {
    pub name: String,
    pub category: EhrCategory,
    pub median: f64,
    pub sd: f64,
    /// Decimal places kept in the raw stream.
    pub decimals: u32,
    pub effect: Effect,
    /// Additional shifts (in SD units) while MV or VP is running.
    pub mv_shift: f64,
    pub vp_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceChannel {
    pub au: String,
    /// Per-frame activation is `sigmoid(base_logit + gain * z)`.
    pub base_logit: f64,
    pub gain: f64,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelEmission {
    /// Log-scale movement amplitude.
    pub activity: Effect,
    /// Tilt of gravity away from the device x-axis.
    pub angle: Effect,
    /// Log-scale movement frequency.
    pub frequency: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvEmission {
    pub light: Effect,
    pub sound: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionModel {
    pub ehr: Vec<EhrChannel>,
    pub accel: AccelEmission,
    pub face: Vec<FaceChannel>,
    pub env: EnvEmission,
    /// Within-window hourly EHR noise, in SD units.
    pub ehr_hourly_noise: f64,
}

impl Default for EmissionModel {
    fn default() -> Self {
        use EhrCategory::*;
        #[allow(clippy::too_many_arguments)]
        let ch = |name: &str, category, median, sd, decimals, effect, mv_shift, vp_shift| EhrChannel {
            name: name.to_string(),
            category,
            median,
            sd,
            decimals,
            effect,
            mv_shift,
            vp_shift,
        };
        let ehr = vec![
            ch("heart_rate", Vital, 86.0, 15.0, 0, fx(0.7, 0.15), 0.0, 0.3),
            ch("systolic_bp", Vital, 122.0, 18.0, 0, fx(-0.5, -0.1), 0.0, 0.4),
            ch("diastolic_bp", Vital, 64.0, 12.0, 0, fx(-0.4, -0.1), 0.0, 0.2),
            ch("mean_arterial_pressure", Vital, 83.0, 13.0, 0, fx(-0.7, -0.15), 0.0, 0.5),
            ch("respiratory_rate", Vital, 19.0, 5.0, 0, fx(0.5, 0.15), -0.6, 0.0),
            ch("spo2", Vital, 97.0, 2.0, 0, fx(-0.5, -0.1), 0.3, 0.0),
            ch("temperature", Vital, 37.0, 0.6, 1, fx(0.3, 0.05), 0.0, 0.0),
            ch("etco2", Vital, 37.0, 5.0, 0, fx(0.2, 0.0), 0.9, 0.0),
            ch("sofa", Score, 4.0, 2.5, 0, fx(1.0, 0.2), 0.4, 0.5),
            ch("gcs", Score, 13.0, 2.5, 0, fx(-0.8, -0.15), -0.6, 0.0),
            ch("rass", Score, -1.0, 1.5, 0, fx(-0.6, -0.1), -0.5, 0.0),
            ch("braden", Score, 15.0, 2.5, 0, fx(-0.7, -0.1), 0.0, 0.0),
        ];
        let au = |au: &str, base_logit, effect| FaceChannel {
            au: au.to_string(),
            base_logit,
            gain: 0.8,
            effect,
        };
        let face = vec![
            au("au1", -1.5, fx(0.1, 0.6)),
            au("au2", -1.6, fx(0.1, 0.6)),
            au("au6", -1.8, fx(0.15, 0.9)),
            au("au7", -1.4, fx(0.2, 1.2)),
            au("au10", -2.0, fx(0.1, 0.6)),
            au("au12", -1.5, fx(0.1, 0.6)),
            au("au25", -1.0, fx(0.2, 1.05)),
            au("au26", -1.3, fx(0.5, 3.3)),
            au("au43", -1.2, fx(0.6, 3.9)),
        ];
        EmissionModel {
            ehr,
            accel: AccelEmission {
                activity: fx(-0.6, -3.0),
                angle: fx(0.6, 3.6),
                frequency: fx(-0.3, -1.5),
            },
            face,
            env: EnvEmission {
                light: fx(0.1, 0.45),
                sound: fx(0.4, 2.1),
            },
            ehr_hourly_noise: 0.35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresenceRates {
    pub accel: f64,
    pub face: f64,
    pub env: f64,
}

impl Default for PresenceRates {
    /// Window-level counts over the development set: 3,634, 3,741 and 4,683 of 33,779.
    fn default() -> Self {
        PresenceRates {
            accel: 3634.0 / 33779.0,
            face: 3741.0 / 33779.0,
            env: 4683.0 / 33779.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TherapyRates {
    /// Per-therapy probability of being part of an unstable episode's regimen.
    pub mv: f64,
    pub vp: f64,
    pub bt: f64,
    pub crrt: f64,
    /// Per-window probability that an ongoing regimen is redrawn.
    pub redraw: f64,
}

impl Default for TherapyRates {
    fn default() -> Self {
        TherapyRates {
            mv: 0.6,
            vp: 0.45,
            bt: 0.05,
            crrt: 0.08,
            redraw: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub version: String,
    pub n_patients: usize,
    pub seed: u64,
    /// Scales every state-dependent emission shift; 0 gives independent features.
    pub signal_strength: f64,
    pub presence: PresenceRates,
    /// Row-stochastic per-window transitions over (stable, unstable).
    pub transition: [[f64; 2]; 2],
    /// Per-window death hazards; discharge alive ends the sampled stay.
    pub death_hazard_stable: f64,
    pub death_hazard_unstable: f64,
    /// Log-normal stay length.
    pub stay_median_hours: f64,
    pub stay_sigma: f64,
    pub stay_min_hours: f64,
    pub stay_max_hours: f64,
    pub therapy: TherapyRates,
    pub wrist_probability: f64,
    pub ehr_missing_vital: f64,
    pub ehr_missing_score: f64,
    pub accel_rate_hz: f64,
    pub accel_segment_seconds: u32,
    pub face_frames: usize,
    pub env_interval_seconds: u32,
    pub window_hours: i64,
    pub emissions: EmissionModel,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            version: GEN_CONFIG_VERSION.to_string(),
            n_patients: 300,
            seed: 20240501,
            signal_strength: 0.8,
            presence: PresenceRates::default(),
            transition: [[0.981, 0.019], [0.036, 0.964]],
            death_hazard_stable: 0.0001,
            death_hazard_unstable: 0.0013,
            stay_median_hours: 218.0,
            // Interquartile range 113..487 h on a log-normal scale.
            stay_sigma: 1.08,
            stay_min_hours: 2.0,
            stay_max_hours: 1500.0,
            therapy: TherapyRates::default(),
            wrist_probability: 0.65,
            ehr_missing_vital: 0.1,
            ehr_missing_score: 0.5,
            accel_rate_hz: 20.0,
            accel_segment_seconds: 15,
            face_frames: 60,
            env_interval_seconds: 600,
            window_hours: 4,
            emissions: EmissionModel::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != GEN_CONFIG_VERSION {
            return bad(format!("generator config version {:?}, expected {GEN_CONFIG_VERSION:?}", self.version));
        }
        let unit = |name: &str, x: f64| -> Result<()> {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {x} is not a rate in [0, 1]")))
            }
        };
        unit("signal_strength", self.signal_strength)?;
        unit("presence.accel", self.presence.accel)?;
        unit("presence.face", self.presence.face)?;
        unit("presence.env", self.presence.env)?;
        unit("death_hazard_stable", self.death_hazard_stable)?;
        unit("death_hazard_unstable", self.death_hazard_unstable)?;
        unit("therapy.mv", self.therapy.mv)?;
        unit("therapy.vp", self.therapy.vp)?;
        unit("therapy.bt", self.therapy.bt)?;
        unit("therapy.crrt", self.therapy.crrt)?;
        unit("therapy.redraw", self.therapy.redraw)?;
        unit("wrist_probability", self.wrist_probability)?;
        unit("ehr_missing_vital", self.ehr_missing_vital)?;
        unit("ehr_missing_score", self.ehr_missing_score)?;
        for (i, row) in self.transition.iter().enumerate() {
            unit("transition", row[0])?;
            unit("transition", row[1])?;
            if (row[0] + row[1] - 1.0).abs() > 1e-9 {
                return bad(format!("transition row {i} sums to {}, not 1", row[0] + row[1]));
            }
        }
        if self.therapy.mv + self.therapy.vp + self.therapy.bt + self.therapy.crrt <= 0.0 {
            return bad("at least one therapy needs a positive rate".into());
        }
        if !(self.stay_median_hours > 0.0 && self.stay_sigma >= 0.0 && self.stay_min_hours > 0.0 && self.stay_max_hours >= self.stay_min_hours) {
            return bad("stay-length parameters must be positive with min <= max".into());
        }
        if self.accel_rate_hz < 10.0 || self.accel_segment_seconds == 0 {
            return bad("accelerometer streams need rate >= 10 Hz and a positive segment length".into());
        }
        if self.window_hours <= 0 || self.face_frames == 0 || self.env_interval_seconds == 0 {
            return bad("window, face and environment sampling parameters must be positive".into());
        }
        let window_s = self.window_hours as u32 * 3600;
        if self.accel_segment_seconds > window_s || self.env_interval_seconds > window_s {
            return bad("sampling periods must fit inside one window".into());
        }
        if self.emissions.ehr.is_empty() || self.emissions.face.len() != 9 {
            return bad("emission model needs EHR channels and exactly nine AU channels".into());
        }
        if self.emissions.ehr.iter().any(|c| !(c.sd > 0.0)) {
            return bad("EHR channel SDs must be positive".into());
        }
        Ok(())
    }

    /// Stationary probability of the unstable state.
    pub fn stationary_unstable(&self) -> f64 {
        let (su, us) = (self.transition[0][1], self.transition[1][0]);
        if su + us == 0.0 {
            0.0
        } else {
            su / (su + us)
        }
    }

    /// EHR schema implied by the emission channels, steps = hours per window.
    pub fn ehr_schema(&self) -> EhrSchema {
        EhrSchema {
            variables: self
                .emissions
                .ehr
                .iter()
                .map(|c| EhrVariable {
                    name: c.name.clone(),
                    category: c.category,
                    population_median: c.median,
                })
                .collect(),
            steps: self.window_hours as usize,
        }
    }
}
