//! Development-versus-test characteristic tables at patient and window level.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::labels::Head;
use crate::data::record::{PatientRecord, Race, Sex, StaticEhr};
use crate::data::split::{CohortSplit, SplitName};
use crate::error::Result;
use crate::features::window::ObservationWindow;
use crate::stats::bootstrap::percentile_sorted;
use crate::stats::hypothesis::{mean_sd, two_prop_ztest, welch_ttest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub section: String,
    pub name: String,
    pub development: String,
    pub test: String,
    /// `None` where no test applies.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    pub rows: Vec<TableRow>,
}

impl CohortTable {
    fn push(&mut self, section: &str, name: &str, development: String, test: String, p_value: Option<f64>) {
        self.rows.push(TableRow {
            section: section.to_string(),
            name: name.to_string(),
            development,
            test,
            p_value,
        });
    }

    fn proportion(&mut self, section: &str, name: &str, k1: usize, n1: usize, k2: usize, n2: usize) {
        let pct = |k: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
        let p = two_prop_ztest(k1 as u64, n1 as u64, k2 as u64, n2 as u64).ok();
        self.push(
            section,
            name,
            format!("{k1} ({:.1}%)", pct(k1, n1)),
            format!("{k2} ({:.1}%)", pct(k2, n2)),
            p,
        );
    }

    pub fn row(&self, name: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["section", "characteristic", "development", "test", "p_value"])?;
        for r in &self.rows {
            let p = r.p_value.map(|p| format!("{p:.4}")).unwrap_or_default();
            w.write_record([r.section.as_str(), &r.name, &r.development, &r.test, &p])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<40}{:>22}{:>22}{:>10}\n", "characteristic", "development", "test", "p-value");
        let mut section = "";
        for r in &self.rows {
            if r.section != section {
                section = &r.section;
                s.push_str(&format!("[{section}]\n"));
            }
            let p = match r.p_value {
                Some(p) if p < 0.05 => "<0.05".to_string(),
                Some(p) => format!("{p:.2}"),
                None => "-".to_string(),
            };
            s.push_str(&format!("  {:<38}{:>22}{:>22}{:>10}\n", r.name, r.development, r.test, p));
        }
        s
    }
}

fn los_hours(p: &PatientRecord) -> f64 {
    p.stay().num_seconds() as f64 / 3600.0
}

fn welch_of(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (m1, s1) = mean_sd(a);
    let (m2, s2) = mean_sd(b);
    welch_ttest(m1, s1, a.len() as u64, m2, s2, b.len() as u64).ok()
}

fn median_iqr(x: &[f64]) -> String {
    if x.is_empty() {
        return "-".into();
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    format!("{:.0} ({:.0}, {:.0})", percentile_sorted(&s, 0.5), percentile_sorted(&s, 0.25), percentile_sorted(&s, 0.75))
}

/// Patient characteristics of two groups: counts, age, sex, stay length,
/// modality availability, race and comorbidities with Welch or z-test p-values.
pub fn describe_groups(dev: &[&PatientRecord], test: &[&PatientRecord]) -> CohortTable {
    let mut t = CohortTable::default();
    let (n1, n2) = (dev.len(), test.len());
    t.push("basic", "patients", n1.to_string(), n2.to_string(), None);

    let ages = |g: &[&PatientRecord]| g.iter().map(|p| p.static_ehr.age).collect::<Vec<_>>();
    let (a1, a2) = (ages(dev), ages(test));
    let msd = |x: &[f64]| {
        if x.len() < 2 {
            "-".to_string()
        } else {
            let (m, s) = mean_sd(x);
            format!("{m:.0} ({s:.0})")
        }
    };
    t.push("basic", "age, mean (SD)", msd(&a1), msd(&a2), welch_of(&a1, &a2));

    let count = |g: &[&PatientRecord], f: &dyn Fn(&PatientRecord) -> bool| g.iter().filter(|p| f(p)).count();
    let female = |p: &PatientRecord| p.static_ehr.sex == Sex::Female;
    t.proportion("basic", "female", count(dev, &female), n1, count(test, &female), n2);

    let los = |g: &[&PatientRecord]| g.iter().map(|p| los_hours(p)).collect::<Vec<_>>();
    let (l1, l2) = (los(dev), los(test));
    t.push("basic", "length of stay (h), median (IQR)", median_iqr(&l1), median_iqr(&l2), welch_of(&l1, &l2));

    let modalities: [(&str, &dyn Fn(&PatientRecord) -> bool); 3] = [
        ("face AU data", &|p| !p.streams.face.is_empty()),
        ("accelerometer data", &|p| !p.streams.accel.is_empty()),
        ("environmental data", &|p| !p.streams.light.is_empty() && !p.streams.sound.is_empty()),
    ];
    for (name, f) in modalities {
        t.proportion("modalities", name, count(dev, f), n1, count(test, f), n2);
    }
    for (name, race) in [("Black", Race::Black), ("White", Race::White), ("Other", Race::Other)] {
        let f = |p: &PatientRecord| p.static_ehr.race == race;
        t.proportion("race", name, count(dev, &f), n1, count(test, &f), n2);
    }
    for (i, name) in StaticEhr::COMORBIDITIES.iter().enumerate() {
        let f = |p: &PatientRecord| p.static_ehr.comorbidities[i];
        t.proportion("comorbidities", name, count(dev, &f), n1, count(test, &f), n2);
    }
    t
}

/// Patient table for a split: development (train + validation) against test.
pub fn describe_cohort(cohort: &[PatientRecord], split: &CohortSplit) -> CohortTable {
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for p in cohort {
        match split.assignment(&p.patient_id) {
            Some(SplitName::Test) => test.push(p),
            Some(_) => dev.push(p),
            None => {}
        }
    }
    describe_groups(&dev, &test)
}

/// Window-level availability and label counts of two window sets.
pub fn describe_windows(dev: &[ObservationWindow], test: &[ObservationWindow]) -> CohortTable {
    let mut t = CohortTable::default();
    let (n1, n2) = (dev.len(), test.len());
    t.push("windows", "observation windows", n1.to_string(), n2.to_string(), None);
    let count = |ws: &[ObservationWindow], f: &dyn Fn(&ObservationWindow) -> bool| ws.iter().filter(|w| f(w)).count();
    let blocks: [(&str, &dyn Fn(&ObservationWindow) -> bool); 4] = [
        ("EHR", &|_| true),
        ("face AU features", &|w| w.face.is_some()),
        ("accelerometer features", &|w| w.accel.is_some()),
        ("environmental features", &|w| w.env.is_some()),
    ];
    for (name, f) in blocks {
        t.proportion("modalities", name, count(dev, f), n1, count(test, f), n2);
    }
    for h in Head::ALL {
        let f = |w: &ObservationWindow| w.labels.get(h) == Some(true);
        t.proportion("labels", h.display_name(), count(dev, &f), n1, count(test, &f), n2);
    }
    t
}
