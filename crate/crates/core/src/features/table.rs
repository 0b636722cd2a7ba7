//! CSV tables: the per-window label table and the full feature table.
//!
//! The feature table starts with a `# schema=...` line followed by a header with
//! a fixed column order; absent blocks are empty cells.

use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};

use crate::data::labels::{Head, LabelSet};
use crate::data::record::StaticEhr;
use crate::error::{Error, Result};

use super::accel::ACCEL_FEATURES;
use super::ehr::{EhrSchema, EhrWindow};
use super::env::ENV_FEATURES;
use super::face::FACE_FEATURES;
use super::window::{build_mask, ObservationWindow};

pub const FEATURE_SCHEMA_VERSION: &str = "acuity-features/1";

fn id_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["patient_id", "window_index", "start", "end", "m_ehr", "m_accel", "m_face", "m_env"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(Head::ALL.iter().map(|h| format!("y_{}", h.name())));
    cols.extend(Head::ALL.iter().map(|h| format!("def_{}", h.name())));
    cols
}

pub fn feature_columns(schema: &EhrSchema) -> Vec<String> {
    let mut cols = id_columns();
    for k in 0..schema.steps {
        for v in &schema.variables {
            cols.push(format!("ehr_{}_t{}", v.name, k));
        }
    }
    cols.extend(StaticEhr::feature_names().iter().map(|n| format!("static_{n}")));
    cols.extend(ACCEL_FEATURES.iter().map(|n| format!("accel_{n}")));
    cols.extend(FACE_FEATURES.iter().map(|n| format!("face_{n}")));
    cols.extend(ENV_FEATURES.iter().map(|n| format!("env_{n}")));
    cols
}

fn id_fields(w: &ObservationWindow) -> Vec<String> {
    let b = |x: bool| if x { "1" } else { "0" }.to_string();
    let mut row = vec![
        w.patient_id.clone(),
        w.window_index.to_string(),
        w.start.to_rfc3339(),
        w.end.to_rfc3339(),
    ];
    row.extend(w.mask.bits().iter().map(|&x| b(x)));
    row.extend(w.labels.0.iter().map(|l| b(l.unwrap_or(false))));
    row.extend(w.labels.0.iter().map(|l| b(l.is_some())));
    row
}

/// One row per window: ids, mask bits, label values and label-defined flags.
pub fn write_windows_csv<W: Write>(out: W, windows: &[ObservationWindow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(id_columns())?;
    for w in windows {
        wr.write_record(id_fields(w))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_features_csv<W: Write>(mut out: W, schema: &EhrSchema, windows: &[ObservationWindow]) -> Result<()> {
    writeln!(out, "# schema={FEATURE_SCHEMA_VERSION}")?;
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(feature_columns(schema))?;
    let opt = |b: &Option<Vec<f64>>, n: usize| -> Vec<String> {
        match b {
            Some(v) => v.iter().map(|x| x.to_string()).collect(),
            None => vec![String::new(); n],
        }
    };
    for w in windows {
        let mut row = id_fields(w);
        row.extend(w.ehr.temporal.iter().map(|x| x.to_string()));
        row.extend(w.ehr.static_.iter().map(|x| x.to_string()));
        row.extend(opt(&w.accel, ACCEL_FEATURES.len()));
        row.extend(opt(&w.face, FACE_FEATURES.len()));
        row.extend(opt(&w.env, ENV_FEATURES.len()));
        wr.write_record(row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_features_csv<R: BufRead>(mut input: R, schema: &EhrSchema) -> Result<Vec<ObservationWindow>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let expected = format!("# schema={FEATURE_SCHEMA_VERSION}");
    if first.trim_end() != expected {
        return Err(Error::Schema(format!("feature table: expected '{expected}', found '{}'", first.trim_end())));
    }
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != feature_columns(schema) {
        return Err(Error::Schema("feature table columns do not match the EHR schema".into()));
    }
    let n_temporal = schema.steps * schema.n_vars();
    let n_static = StaticEhr::feature_names().len();
    let mut out = Vec::new();
    for (row_no, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Schema(format!("feature table row {}: {what}", row_no + 1));
        let num = |i: usize| -> Result<f64> { rec[i].parse::<f64>().map_err(|_| bad(&format!("column {i} not numeric"))) };
        let flag = |i: usize| -> Result<bool> {
            match &rec[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(&format!("column {i} not a 0/1 flag"))),
            }
        };
        let time = |i: usize| -> Result<DateTime<Utc>> {
            DateTime::parse_from_rfc3339(&rec[i])
                .map(|t| t.with_timezone(&Utc))
                .map_err(|_| bad("bad timestamp"))
        };
        let mut labels = LabelSet::UNDEFINED;
        for (k, h) in Head::ALL.iter().enumerate() {
            if flag(18 + k)? {
                labels.set(*h, flag(8 + k)?);
            }
        }
        let mut c = 28;
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v = (c..c + n).map(num).collect::<Result<Vec<_>>>();
            c += n;
            v
        };
        let temporal = take(n_temporal)?;
        let static_ = take(n_static)?;
        let mut c2 = 28 + n_temporal + n_static;
        let mut optional = |n: usize| -> Result<Option<Vec<f64>>> {
            let range = c2..c2 + n;
            c2 += n;
            if range.clone().all(|i| rec[i].is_empty()) {
                Ok(None)
            } else {
                range.map(num).collect::<Result<Vec<_>>>().map(Some)
            }
        };
        let accel = optional(ACCEL_FEATURES.len())?;
        let face = optional(FACE_FEATURES.len())?;
        let env = optional(ENV_FEATURES.len())?;
        let mut w = ObservationWindow {
            patient_id: rec[0].to_string(),
            window_index: rec[1].parse().map_err(|_| bad("bad window_index"))?,
            start: time(2)?,
            end: time(3)?,
            ehr: EhrWindow { temporal, static_ },
            accel,
            face,
            env,
            mask: crate::data::mask::ModalityMask::EHR_ONLY,
            labels,
        };
        w.mask = build_mask(&w);
        let stored = crate::data::mask::ModalityMask::new(flag(5)?, flag(6)?, flag(7)?);
        if stored != w.mask {
            return Err(bad("mask bits disagree with present blocks"));
        }
        out.push(w);
    }
    Ok(out)
}
