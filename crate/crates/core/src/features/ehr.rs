//! EHR block: hourly temporal matrix (forward-fill, then population median) plus static vector.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::data::record::{seconds_between, EhrObservation, PatientRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EhrCategory {
    Vital,
    Lab,
    Score,
    Medication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrVariable {
    pub name: String,
    pub category: EhrCategory,
    /// Fallback when a variable has never been observed for the patient.
    pub population_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrSchema {
    pub variables: Vec<EhrVariable>,
    /// Temporal steps per observation window.
    pub steps: usize,
}

impl Default for EhrSchema {
    /// Eight vitals and four assessment scores, four hourly steps.
    fn default() -> Self {
        use EhrCategory::*;
        let v = |name: &str, category, population_median| EhrVariable {
            name: name.to_string(),
            category,
            population_median,
        };
        EhrSchema {
            variables: vec![
                v("heart_rate", Vital, 86.0),
                v("systolic_bp", Vital, 122.0),
                v("diastolic_bp", Vital, 64.0),
                v("mean_arterial_pressure", Vital, 83.0),
                v("respiratory_rate", Vital, 19.0),
                v("spo2", Vital, 97.0),
                v("temperature", Vital, 37.0),
                v("etco2", Vital, 37.0),
                v("sofa", Score, 4.0),
                v("gcs", Score, 13.0),
                v("rass", Score, -1.0),
                v("braden", Score, 15.0),
            ],
            steps: 4,
        }
    }
}

impl EhrSchema {
    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.variables.is_empty() || self.steps == 0 {
            return Err(Error::Config("EHR schema needs at least one variable and one step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrWindow {
    /// Row-major `steps x n_vars`.
    pub temporal: Vec<f64>,
    pub static_: Vec<f64>,
}

/// Per-patient imputation state: each variable's observations sorted by time.
pub struct EhrTimeline<'a> {
    schema: &'a EhrSchema,
    origin: DateTime<Utc>,
    /// Per variable: (seconds since origin, value).
    series: Vec<Vec<(f64, f64)>>,
    static_: Vec<f64>,
}

impl<'a> EhrTimeline<'a> {
    pub fn new(schema: &'a EhrSchema, patient: &PatientRecord) -> Result<Self> {
        let origin = patient.admission_time;
        let mut series = vec![Vec::new(); schema.n_vars()];
        let mut obs: Vec<&EhrObservation> = patient.streams.ehr.iter().collect();
        obs.sort_by_key(|o| o.time);
        for o in obs {
            if o.values.len() != schema.n_vars() {
                return Err(Error::Schema(format!(
                    "patient {}: EHR observation has {} values, schema has {}",
                    patient.patient_id,
                    o.values.len(),
                    schema.n_vars()
                )));
            }
            let t = seconds_between(origin, o.time);
            for (s, v) in series.iter_mut().zip(&o.values) {
                if let Some(x) = v.filter(|x| x.is_finite()) {
                    s.push((t, x));
                }
            }
        }
        Ok(EhrTimeline {
            schema,
            origin,
            series,
            static_: patient.static_ehr.encode(),
        })
    }

    /// Step value: mean of in-step observations, else the latest earlier one, else the median.
    pub fn window(&self, start: DateTime<Utc>, window: Duration) -> EhrWindow {
        let steps = self.schema.steps;
        let step_secs = window.num_milliseconds() as f64 / 1000.0 / steps as f64;
        let w0 = seconds_between(self.origin, start);
        let n = self.schema.n_vars();
        let mut temporal = vec![0.0; steps * n];
        for (f, series) in self.series.iter().enumerate() {
            for k in 0..steps {
                let lo = w0 + k as f64 * step_secs;
                let hi = lo + step_secs;
                let first = series.partition_point(|&(t, _)| t < lo);
                let last = series.partition_point(|&(t, _)| t < hi);
                temporal[k * n + f] = if last > first {
                    series[first..last].iter().map(|&(_, v)| v).sum::<f64>() / (last - first) as f64
                } else if first > 0 {
                    series[first - 1].1
                } else {
                    self.schema.variables[f].population_median
                };
            }
        }
        EhrWindow {
            temporal,
            static_: self.static_.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::*;
    use chrono::TimeZone;

    fn schema() -> EhrSchema {
        EhrSchema {
            variables: vec![
                EhrVariable { name: "a".into(), category: EhrCategory::Vital, population_median: 7.0 },
                EhrVariable { name: "b".into(), category: EhrCategory::Lab, population_median: -1.0 },
            ],
            steps: 4,
        }
    }

    #[test]
    fn forward_fill_then_median() {
        let t0 = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
        let h = |x: i64| t0 + Duration::minutes(x);
        let p = PatientRecord {
            patient_id: "p".into(),
            admission_time: t0,
            discharge_time: t0 + Duration::hours(12),
            outcome_at_discharge: Outcome::DischargedAlive,
            therapy_intervals: vec![],
            static_ehr: StaticEhr {
                age: 70.0,
                sex: Sex::Male,
                race: Race::Black,
                comorbidities: [false; N_COMORBIDITIES],
                cci: 2,
            },
            streams: RawStreams {
                ehr: vec![
                    EhrObservation { time: h(70), values: vec![Some(1.0), None] },
                    EhrObservation { time: h(80), values: vec![Some(3.0), None] },
                    EhrObservation { time: h(300), values: vec![None, Some(5.0)] },
                ],
                ..Default::default()
            },
        };
        let s = schema();
        let tl = EhrTimeline::new(&s, &p).unwrap();
        let w = tl.window(t0, Duration::hours(4));
        // step 0: a unseen -> median; step 1: mean(1,3); steps 2,3 carry the last observation.
        assert_eq!(w.temporal, vec![7.0, -1.0, 2.0, -1.0, 3.0, -1.0, 3.0, -1.0]);
        let w2 = tl.window(t0 + Duration::hours(4), Duration::hours(4));
        assert_eq!(w2.temporal, vec![3.0, -1.0, 3.0, 5.0, 3.0, 5.0, 3.0, 5.0]);
        assert_eq!(w.static_.len(), STATIC_DIM);
    }

    #[test]
    fn default_schema_shape() {
        let s = EhrSchema::default();
        assert_eq!(s.n_vars(), 12);
        assert_eq!(s.variables.iter().filter(|v| v.category == EhrCategory::Vital).count(), 8);
        assert_eq!(s.variables.iter().filter(|v| v.category == EhrCategory::Score).count(), 4);
    }
}
