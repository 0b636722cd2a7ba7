//! Cohort JSON-lines: one `PatientRecord` per line.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::record::PatientRecord;

pub fn write_cohort<W: Write>(mut out: W, cohort: &[PatientRecord]) -> Result<()> {
    for p in cohort {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads and validates every record; ids must be unique.
pub fn read_cohort<R: BufRead>(input: R) -> Result<Vec<PatientRecord>> {
    let mut cohort = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PatientRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("cohort line {}: {e}", lineno + 1)))?;
        rec.validate()?;
        if !seen.insert(rec.patient_id.clone()) {
            return Err(Error::InvalidRecord {
                id: rec.patient_id,
                reason: "duplicate patient_id".into(),
            });
        }
        cohort.push(rec);
    }
    Ok(cohort)
}
