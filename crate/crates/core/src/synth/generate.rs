//! Cohort simulator: a two-state Markov chain per window drives therapies,
//! terminal events and state-shifted emissions in every modality.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::record::{
    AccelSegment, EhrObservation, FaceSession, LevelSeries, Outcome, PatientRecord, Placement, Race, RawStreams, Sex, StaticEhr, Therapy,
    TherapyFlags, TherapyInterval, N_COMORBIDITIES,
};
use crate::error::Result;
use crate::features::ehr::EhrCategory;
use crate::features::face::pack_frame;
use crate::seed;

use super::config::{Effect, EmissionModel, GenConfig};

/// Per-patient comorbidity prevalence, in `StaticEhr::COMORBIDITIES` order.
const COMORBIDITY_RATES: [f64; N_COMORBIDITIES] = [0.08, 0.11, 0.02, 0.06, 0.26, 0.28, 0.18, 0.21, 0.03, 0.27];
/// Charlson weights for the same flags.
const CHARLSON_WEIGHTS: [u32; N_COMORBIDITIES] = [2, 1, 1, 2, 1, 1, 1, 1, 1, 2];

/// Standardized per-window latents of every modality.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLatent {
    pub ehr: Vec<f64>,
    /// (activity, angle, frequency)
    pub accel: [f64; 3],
    pub face: [f64; 9],
    /// (light, sound)
    pub env: [f64; 2],
}

#[inline]
fn shift(e: Effect, s: f64, cur: bool, next: bool) -> f64 {
    s * (e.cur * cur as u8 as f64 + e.next * next as u8 as f64)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws one window's latents given the current and next state (true = unstable).
pub fn sample_latent(model: &EmissionModel, s: f64, cur: bool, next: bool, therapies: TherapyFlags, rng: &mut ChaCha8Rng) -> WindowLatent {
    let mv = therapies.has(Therapy::Mv) as u8 as f64;
    let vp = therapies.has(Therapy::Vp) as u8 as f64;
    let ehr = model
        .ehr
        .iter()
        .map(|c| shift(c.effect, s, cur, next) + s * (mv * c.mv_shift + vp * c.vp_shift) + normal(rng))
        .collect();
    let a = &model.accel;
    let accel = [a.activity, a.angle, a.frequency].map(|e| shift(e, s, cur, next) + normal(rng));
    let mut face = [0.0; 9];
    for (z, c) in face.iter_mut().zip(&model.face) {
        *z = shift(c.effect, s, cur, next) + normal(rng);
    }
    let env = [model.env.light, model.env.sound].map(|e| shift(e, s, cur, next) + normal(rng));
    WindowLatent { ehr, accel, face, env }
}

fn round_to(x: f64, decimals: u32) -> f64 {
    let f = 10f64.powi(decimals as i32);
    (x * f).round() / f
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()
}

fn sample_static(rng: &mut ChaCha8Rng) -> StaticEhr {
    let age = (65.0 + 17.0 * normal(rng)).round().max(18.0);
    let sex = if rng.random::<f64>() < 0.36 { Sex::Female } else { Sex::Male };
    let r = rng.random::<f64>();
    let race = if r < 0.13 {
        Race::Black
    } else if r < 0.94 {
        Race::White
    } else {
        Race::Other
    };
    let mut comorbidities = [false; N_COMORBIDITIES];
    for (flag, &p) in comorbidities.iter_mut().zip(&COMORBIDITY_RATES) {
        *flag = rng.random::<f64>() < p;
    }
    let cci = comorbidities.iter().zip(&CHARLSON_WEIGHTS).filter(|(f, _)| **f).map(|(_, w)| w).sum();
    StaticEhr {
        age,
        sex,
        race,
        comorbidities,
        cci,
    }
}

fn draw_regimen(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> TherapyFlags {
    let t = &cfg.therapy;
    loop {
        let flags = TherapyFlags([t.mv, t.vp, t.bt, t.crrt].map(|p| rng.random::<f64>() < p));
        if flags.0.iter().any(|&b| b) {
            return flags;
        }
    }
}

/// Latent trajectory of one stay, in seconds from admission.
struct Trajectory {
    stay_s: i64,
    unstable: Vec<bool>,
    regimens: Vec<TherapyFlags>,
    died: bool,
}

fn simulate(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Trajectory {
    let window_s = cfg.window_hours * 3600;
    let hours = (cfg.stay_median_hours.ln() + cfg.stay_sigma * normal(rng))
        .exp()
        .clamp(cfg.stay_min_hours, cfg.stay_max_hours);
    let mut stay_s = ((hours * 3600.0).round() as i64).max(1);
    let n_slots = (stay_s + window_s - 1) / window_s;
    let pu = cfg.stationary_unstable();
    let mut unstable: Vec<bool> = Vec::with_capacity(n_slots as usize);
    let mut regimens: Vec<TherapyFlags> = Vec::with_capacity(n_slots as usize);
    let mut died = false;
    for t in 0..n_slots {
        let prev = if t == 0 { None } else { Some(unstable[t as usize - 1]) };
        let u = match prev {
            None => rng.random::<f64>() < pu,
            Some(p) => rng.random::<f64>() < cfg.transition[p as usize][1],
        };
        let regimen = match (u, prev) {
            (false, _) => TherapyFlags::default(),
            (true, Some(true)) if rng.random::<f64>() >= cfg.therapy.redraw => regimens[t as usize - 1],
            (true, _) => draw_regimen(cfg, rng),
        };
        unstable.push(u);
        regimens.push(regimen);
        let hazard = if u { cfg.death_hazard_unstable } else { cfg.death_hazard_stable };
        if rng.random::<f64>() < hazard {
            let start = t * window_s;
            let len = window_s.min(stay_s - start);
            stay_s = start + 1 + (rng.random::<f64>() * (len - 1).max(0) as f64) as i64;
            died = true;
            break;
        }
    }
    Trajectory {
        stay_s,
        unstable,
        regimens,
        died,
    }
}

/// Therapy intervals aligned to slot runs, pulled inward by up to a quarter of
/// each boundary slot so window-level therapy flags equal the regimens exactly.
fn therapy_intervals(cfg: &GenConfig, admission: DateTime<Utc>, traj: &Trajectory, rng: &mut ChaCha8Rng) -> Vec<TherapyInterval> {
    let window_s = cfg.window_hours * 3600;
    let slot_len = |t: usize| window_s.min(traj.stay_s - t as i64 * window_s);
    let mut out = Vec::new();
    for therapy in Therapy::ALL {
        let active: Vec<bool> = traj.regimens.iter().map(|r| r.has(therapy)).collect();
        let mut t = 0;
        while t < active.len() {
            if !active[t] {
                t += 1;
                continue;
            }
            let a = t;
            while t < active.len() && active[t] {
                t += 1;
            }
            let b = t - 1;
            let lead = (rng.random::<f64>() * 0.25 * slot_len(a) as f64) as i64;
            let trail = (rng.random::<f64>() * 0.25 * slot_len(b) as f64) as i64;
            let start = a as i64 * window_s + lead;
            let end = b as i64 * window_s + slot_len(b) - trail;
            out.push(TherapyInterval {
                therapy,
                start: admission + Duration::seconds(start),
                end: admission + Duration::seconds(end),
            });
        }
    }
    out
}

/// Generates patient `index` from its own derived stream.
pub fn generate_patient(cfg: &GenConfig, index: usize) -> PatientRecord {
    build_patient(cfg, index).0
}

fn build_patient(cfg: &GenConfig, index: usize) -> (PatientRecord, Trajectory) {
    let mut rng = seed::rng(cfg.seed, &format!("patient:{index}"));
    let admission = epoch() + Duration::seconds(rng.random_range(0..365 * 24 * 3600));
    let static_ehr = sample_static(&mut rng);
    let placement = if rng.random::<f64>() < cfg.wrist_probability { Placement::Wrist } else { Placement::Ankle };
    let traj = simulate(cfg, &mut rng);
    let therapy_intervals = therapy_intervals(cfg, admission, &traj, &mut rng);

    let model = &cfg.emissions;
    let s = cfg.signal_strength;
    let window_s = cfg.window_hours * 3600;
    let n_windows = (traj.stay_s / window_s) as usize;
    let mut streams = RawStreams::default();
    for t in 0..n_windows {
        let cur = traj.unstable[t];
        let next = traj.unstable.get(t + 1).copied().unwrap_or(cur);
        let w0 = admission + Duration::seconds(t as i64 * window_s);
        let has_accel = rng.random::<f64>() < cfg.presence.accel;
        let has_face = rng.random::<f64>() < cfg.presence.face;
        let has_env = rng.random::<f64>() < cfg.presence.env;
        let z = sample_latent(model, s, cur, next, traj.regimens[t], &mut rng);

        for h in 0..cfg.window_hours {
            let values = model
                .ehr
                .iter()
                .zip(&z.ehr)
                .map(|(c, &zc)| {
                    let miss = match c.category {
                        EhrCategory::Vital => cfg.ehr_missing_vital,
                        _ => cfg.ehr_missing_score,
                    };
                    if rng.random::<f64>() < miss {
                        return None;
                    }
                    let eps = normal(&mut rng);
                    Some(round_to(c.median + c.sd * (zc + model.ehr_hourly_noise * eps), c.decimals))
                })
                .collect();
            streams.ehr.push(EhrObservation {
                time: w0 + Duration::hours(h),
                values,
            });
        }

        if has_accel {
            let seg_s = cfg.accel_segment_seconds as i64;
            let offset = rng.random_range(0..=window_s - seg_s);
            let theta = (1.1 + 0.25 * z.accel[1]).clamp(0.05, std::f64::consts::PI - 0.05);
            let amp = 0.12 * (0.35 * z.accel[0]).exp();
            let freq = (0.6 * (0.25 * z.accel[2]).exp()).clamp(0.1, 4.5);
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let dir = [theta.cos(), theta.sin() * phi.cos(), theta.sin() * phi.sin()];
            let n = (cfg.accel_segment_seconds as f64 * cfg.accel_rate_hz).round() as usize;
            let samples = (0..n)
                .map(|k| {
                    let tt = k as f64 / cfg.accel_rate_hz;
                    let m = 1.0 + amp * (std::f64::consts::TAU * freq * tt + phase).sin();
                    dir.map(|d| round_to(m * d + 0.01 * normal(&mut rng), 4))
                })
                .collect();
            streams.accel.push(AccelSegment {
                placement,
                start: w0 + Duration::seconds(offset),
                rate_hz: cfg.accel_rate_hz,
                samples,
            });
        }

        if has_face {
            let probs: Vec<f64> = model
                .face
                .iter()
                .zip(&z.face)
                .map(|(c, &zc)| 1.0 / (1.0 + (-(c.base_logit + c.gain * zc)).exp()))
                .collect();
            let frames = (0..cfg.face_frames)
                .map(|_| {
                    let mut active = [false; 9];
                    for (a, &p) in active.iter_mut().zip(&probs) {
                        *a = rng.random::<f64>() < p;
                    }
                    pack_frame(active)
                })
                .collect();
            streams.face.push(FaceSession {
                start: w0,
                rate_hz: cfg.face_frames as f64 / window_s as f64,
                frames,
            });
        }

        if has_env {
            let n = (window_s / cfg.env_interval_seconds as i64) as usize;
            let light = (0..n)
                .map(|_| round_to((120f64.ln() + 0.6 * z.env[0] + 0.3 * normal(&mut rng)).exp(), 1))
                .collect();
            let sound = (0..n).map(|_| round_to(52.0 + 4.0 * z.env[1] + 3.0 * normal(&mut rng), 1)).collect();
            for (series, values) in [(&mut streams.light, light), (&mut streams.sound, sound)] {
                series.push(LevelSeries {
                    start: w0,
                    interval_s: cfg.env_interval_seconds as f64,
                    values,
                });
            }
        }
    }

    let record = PatientRecord {
        patient_id: format!("P{:05}", index + 1),
        admission_time: admission,
        discharge_time: admission + Duration::seconds(traj.stay_s),
        outcome_at_discharge: if traj.died { Outcome::Deceased } else { Outcome::DischargedAlive },
        therapy_intervals,
        static_ehr,
        streams,
    };
    (record, traj)
}

/// Generates the whole cohort; patients are independent streams, so the
/// parallel result equals the sequential one.
pub fn generate_cohort(cfg: &GenConfig) -> Result<Vec<PatientRecord>> {
    cfg.validate()?;
    Ok((0..cfg.n_patients).into_par_iter().map(|i| generate_patient(cfg, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::labels::acuity_state;
    use crate::data::windows::segment_windows;

    fn small(n: usize, s: f64) -> GenConfig {
        GenConfig {
            n_patients: n,
            signal_strength: s,
            ..GenConfig::default()
        }
    }

    #[test]
    fn records_are_valid_and_deterministic() {
        let cfg = small(25, 0.8);
        let a = generate_cohort(&cfg).unwrap();
        let b = generate_cohort(&cfg).unwrap();
        assert_eq!(a, b);
        for p in &a {
            p.validate().unwrap();
        }
        let seq: Vec<PatientRecord> = (0..25).map(|i| generate_patient(&cfg, i)).collect();
        assert_eq!(a, seq);
        let other = generate_cohort(&GenConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn window_flags_match_latent_regimens() {
        let cfg = small(40, 0.5);
        for i in 0..40 {
            let (p, traj) = build_patient(&cfg, i);
            assert_eq!(p.discharge_time - p.admission_time, Duration::seconds(traj.stay_s));
            for slot in segment_windows(&p, Duration::hours(4)) {
                assert_eq!(slot.therapies, traj.regimens[slot.window_index]);
                let unstable = acuity_state(slot.therapies) == crate::data::labels::AcuityState::Unstable;
                assert_eq!(unstable, traj.unstable[slot.window_index]);
            }
        }
    }

    #[test]
    fn regimen_never_empty_when_unstable() {
        let cfg = small(1, 0.0);
        let mut rng = seed::rng(3, "regimen");
        for _ in 0..1000 {
            assert!(draw_regimen(&cfg, &mut rng).0.iter().any(|&b| b));
        }
    }

    #[test]
    fn static_fields_in_range() {
        for p in generate_cohort(&small(200, 0.8)).unwrap() {
            let st = &p.static_ehr;
            assert!(st.age >= 18.0);
            let expect: u32 = st.comorbidities.iter().zip(&CHARLSON_WEIGHTS).filter(|(f, _)| **f).map(|(_, w)| w).sum();
            assert_eq!(st.cci, expect);
        }
    }
}
