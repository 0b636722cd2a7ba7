//! Feature importance: mean |IG| per feature, ranked within each modality and head.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::labels::Head;
use crate::data::mask::Modality;
use crate::data::record::StaticEhr;
use crate::error::{Error, Result};
use crate::features::{EhrSchema, ObservationWindow, ACCEL_FEATURES, ENV_FEATURES, FACE_FEATURES};
use crate::nn::{Model, ModelInput};

use super::ig::{integrated_gradients, IgResult};

pub const DEFAULT_TOP_K: usize = 5;

/// Names of the input scalars in encoding order. EHR temporal names are per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNames {
    pub ehr_temporal: Vec<String>,
    pub ehr_static: Vec<String>,
    pub accel: Vec<String>,
    pub face: Vec<String>,
    pub env: Vec<String>,
}

impl FeatureNames {
    pub fn new(schema: &EhrSchema) -> Self {
        let own = |s: &[&str]| s.iter().map(|n| n.to_string()).collect();
        FeatureNames {
            ehr_temporal: own(&schema.names()),
            ehr_static: StaticEhr::feature_names(),
            accel: own(&ACCEL_FEATURES),
            face: own(&FACE_FEATURES),
            env: own(&ENV_FEATURES),
        }
    }
}

/// Attribution of one (window, head) pair, kept for the completeness audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResidual {
    pub patient_id: String,
    pub window_index: usize,
    pub head: Head,
    pub f_input: f64,
    pub f_baseline: f64,
    pub attribution_sum: f64,
    /// `None` when `|f(x) - f(x')| < 1e-6`.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub head: Head,
    pub modality: Modality,
    pub feature: String,
    pub mean_abs_attr: f64,
    /// 1-based within (head, modality).
    pub rank: usize,
    pub n_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub steps: usize,
    pub top_k: usize,
    /// Every feature, grouped by head then modality, each group sorted by rank.
    pub features: Vec<FeatureImportance>,
    pub residuals: Vec<SampleResidual>,
}

impl AttributionReport {
    pub fn ranking(&self, head: Head, modality: Modality) -> Vec<&FeatureImportance> {
        self.features.iter().filter(|f| f.head == head && f.modality == modality).collect()
    }

    pub fn top(&self, head: Head, modality: Modality) -> Vec<&FeatureImportance> {
        self.ranking(head, modality).into_iter().take(self.top_k).collect()
    }

    pub fn max_residual(&self) -> Option<f64> {
        self.residuals.iter().filter_map(|r| r.residual).reduce(f64::max)
    }

    /// CSV with columns `head, modality, feature, mean_abs_attr, rank`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["head", "modality", "feature", "mean_abs_attr", "rank"])?;
        for f in &self.features {
            w.write_record([f.head.name(), f.modality.name(), &f.feature, &format!("{:e}", f.mean_abs_attr), &f.rank.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-feature |IG| of one result, in `names` order for each modality present.
fn abs_by_feature(r: &IgResult<f64>, names: &FeatureNames) -> Vec<(Modality, Vec<f64>)> {
    let mut out = Vec::new();
    let n_vars = names.ehr_temporal.len();
    let mut ehr = vec![0.0; n_vars];
    for (i, v) in r.ehr_temporal.iter().enumerate() {
        ehr[i % n_vars] += v.abs();
    }
    ehr.extend(r.ehr_static.iter().map(|v| v.abs()));
    out.push((Modality::Ehr, ehr));
    for (m, block) in [(Modality::Accel, &r.accel), (Modality::Face, &r.face), (Modality::Env, &r.env)] {
        if let Some(b) = block {
            out.push((m, b.iter().map(|v| v.abs()).collect()));
        }
    }
    out
}

fn modality_names(names: &FeatureNames, m: Modality) -> Vec<String> {
    match m {
        Modality::Ehr => names.ehr_temporal.iter().chain(&names.ehr_static).cloned().collect(),
        Modality::Accel => names.accel.clone(),
        Modality::Face => names.face.clone(),
        Modality::Env => names.env.clone(),
    }
}

/// Mean |IG| per feature over the windows where its modality was present, ranked
/// descending with ties broken by name so the order never depends on encoding.
/// A modality with no attributed window is left out of the report.
pub fn rank_features(results: &[(String, usize, IgResult<f64>)], names: &FeatureNames, top_k: usize) -> Result<AttributionReport> {
    if names.ehr_temporal.is_empty() {
        return Err(Error::Config("feature names need at least one EHR variable".into()));
    }
    let mut sums: BTreeMap<(Head, Modality), (Vec<f64>, usize)> = BTreeMap::new();
    let mut residuals = Vec::with_capacity(results.len());
    let mut steps = 0;
    for (pid, idx, r) in results {
        steps = r.steps;
        for (m, vals) in abs_by_feature(r, names) {
            let e = sums.entry((r.head, m)).or_insert_with(|| (vec![0.0; vals.len()], 0));
            if e.0.len() != vals.len() {
                return Err(Error::Shape {
                    modality: m.name(),
                    expected: e.0.len(),
                    got: vals.len(),
                });
            }
            e.0.iter_mut().zip(&vals).for_each(|(a, v)| *a += v);
            e.1 += 1;
        }
        residuals.push(SampleResidual {
            patient_id: pid.clone(),
            window_index: *idx,
            head: r.head,
            f_input: r.f_input,
            f_baseline: r.f_baseline,
            attribution_sum: r.total(),
            residual: r.completeness_residual(),
        });
    }
    let mut features = Vec::new();
    for ((head, m), (sum, n)) in sums {
        let labels = modality_names(names, m);
        if labels.len() != sum.len() {
            return Err(Error::Shape {
                modality: m.name(),
                expected: sum.len(),
                got: labels.len(),
            });
        }
        let mut rows: Vec<(String, f64)> = labels.into_iter().zip(sum.iter().map(|s| s / n as f64)).collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        features.extend(rows.into_iter().enumerate().map(|(i, (feature, mean))| FeatureImportance {
            head,
            modality: m,
            feature,
            mean_abs_attr: mean,
            rank: i + 1,
            n_windows: n,
        }));
    }
    Ok(AttributionReport {
        steps,
        top_k,
        features,
        residuals,
    })
}

/// Runs integrated gradients for every (window, head) pair in parallel and ranks
/// the results. Windows must already be normalized and filtered to the model's arm.
pub fn attribute_windows(model: &Model, windows: &[ObservationWindow], heads: &[Head], steps: usize, names: &FeatureNames, top_k: usize) -> Result<AttributionReport> {
    let jobs: Vec<(usize, Head)> = (0..windows.len()).flat_map(|i| heads.iter().map(move |&h| (i, h))).collect();
    let results: Vec<(String, usize, IgResult<f64>)> = jobs
        .par_iter()
        .map(|&(i, h)| {
            let w = &windows[i];
            let r = integrated_gradients(model, &ModelInput::from_window(w), h, steps)?;
            Ok((w.patient_id.clone(), w.window_index, r))
        })
        .collect::<Result<_>>()?;
    rank_features(&results, names, top_k)
}
