//! Per-arm evaluation and the outcome-by-arm comparison report.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::labels::{Head, LabelSet, TaskFamily, N_HEADS};
use crate::error::Result;
use crate::seed;

use super::auroc::auroc;
use super::bootstrap::{bootstrap_ci, MetricResult, DEFAULT_ITERATIONS};
use super::wilcoxon::wilcoxon_rank_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    NotSignificant,
    Significant,
    HighlySignificant,
}

impl Tier {
    pub fn from_p(p: f64) -> Tier {
        if p < 0.001 {
            Tier::HighlySignificant
        } else if p < 0.05 {
            Tier::Significant
        } else {
            Tier::NotSignificant
        }
    }

    pub fn marker(self) -> &'static str {
        match self {
            Tier::NotSignificant => "",
            Tier::Significant => "*",
            Tier::HighlySignificant => "**",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Tier::NotSignificant => "p>0.05",
            Tier::Significant => "p<0.05",
            Tier::HighlySignificant => "p<0.001",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Same,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub outcome: String,
    pub arm_auroc: f64,
    pub baseline_auroc: f64,
    pub p_value: f64,
    pub tier: Tier,
    pub direction: Direction,
}

impl ComparisonResult {
    pub fn new(outcome: &str, arm: &MetricResult, baseline: &MetricResult) -> Self {
        let p_value = wilcoxon_rank_sum(&arm.values, &baseline.values);
        let direction = if arm.point > baseline.point {
            Direction::Up
        } else if arm.point < baseline.point {
            Direction::Down
        } else {
            Direction::Same
        };
        ComparisonResult {
            outcome: outcome.to_string(),
            arm_auroc: arm.point,
            baseline_auroc: baseline.point,
            p_value,
            tier: Tier::from_p(p_value),
            direction,
        }
    }

    /// Yellow when not significant, green for a significant gain, red for a loss.
    pub fn color(&self) -> &'static str {
        match (self.tier, self.direction) {
            (Tier::NotSignificant, _) | (_, Direction::Same) => "yellow",
            (_, Direction::Up) => "green",
            (_, Direction::Down) => "red",
        }
    }
}

/// How the per-family "Overall" AUROC pools heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverallMode {
    /// One AUROC over every defined (window, head) pair of the family.
    #[default]
    Micro,
    /// Mean of the family's per-head AUROCs.
    Macro,
}

/// Resampling unit of the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapUnit {
    #[default]
    Window,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iterations: usize,
    pub level: f64,
    pub seed: u64,
    pub overall: OverallMode,
    pub unit: BootstrapUnit,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iterations: DEFAULT_ITERATIONS,
            level: 0.95,
            seed: 0,
            overall: OverallMode::Micro,
            unit: BootstrapUnit::Window,
        }
    }
}

pub const FAMILIES: [TaskFamily; 2] = [TaskFamily::Transition, TaskFamily::Status];

pub fn family_name(f: TaskFamily) -> &'static str {
    match f {
        TaskFamily::Transition => "transition",
        TaskFamily::Status => "status",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEvaluation {
    pub arm: String,
    /// Indexed by head; `None` when the metric is undefined on the test set.
    pub heads: Vec<Option<MetricResult>>,
    /// Indexed like [`FAMILIES`].
    pub overall: Vec<Option<MetricResult>>,
}

/// Pooled AUROC of the given heads over the drawn windows.
fn family_metric(probs: &[[f64; N_HEADS]], labels: &[LabelSet], draw: &[usize], heads: &[Head], mode: OverallMode) -> Option<f64> {
    match mode {
        OverallMode::Micro => {
            let mut s = Vec::new();
            let mut y = Vec::new();
            for &i in draw {
                for &h in heads {
                    if let Some(v) = labels[i].get(h) {
                        s.push(probs[i][h.index()]);
                        y.push(v);
                    }
                }
            }
            auroc(&s, &y)
        }
        OverallMode::Macro => {
            let vals: Vec<f64> = heads.iter().filter_map(|&h| head_metric(probs, labels, draw, h)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

fn head_metric(probs: &[[f64; N_HEADS]], labels: &[LabelSet], draw: &[usize], head: Head) -> Option<f64> {
    let mut s = Vec::with_capacity(draw.len());
    let mut y = Vec::with_capacity(draw.len());
    for &i in draw {
        if let Some(v) = labels[i].get(head) {
            s.push(probs[i][head.index()]);
            y.push(v);
        }
    }
    auroc(&s, &y)
}

/// Expands drawn units into window indices.
fn expand(units: &[Vec<usize>], draw: &[usize]) -> Vec<usize> {
    draw.iter().flat_map(|&u| units[u].iter().copied()).collect()
}

/// Bootstraps every head and both family aggregates for one arm.
///
/// `groups[i]` is window `i`'s patient id, used when resampling patients. The
/// per-head streams depend only on `cfg.seed` and the head name, so every arm
/// evaluated with the same config sees the same resamples.
pub fn evaluate_arm(arm: &str, probs: &[[f64; N_HEADS]], labels: &[LabelSet], groups: &[String], cfg: &EvalConfig) -> ArmEvaluation {
    assert_eq!(probs.len(), labels.len());
    let units: Vec<Vec<usize>> = match cfg.unit {
        BootstrapUnit::Window => (0..probs.len()).map(|i| vec![i]).collect(),
        BootstrapUnit::Patient => {
            assert_eq!(groups.len(), probs.len(), "patient bootstrap needs one group per window");
            let mut ids: Vec<&String> = groups.iter().collect();
            ids.sort();
            ids.dedup();
            let mut u = vec![Vec::new(); ids.len()];
            for (i, g) in groups.iter().enumerate() {
                u[ids.binary_search(&g).expect("present")].push(i);
            }
            u
        }
    };
    let run = |label: &str, f: &dyn Fn(&[usize]) -> Option<f64>| -> Option<MetricResult> {
        if units.is_empty() {
            return None;
        }
        let all: Vec<usize> = (0..probs.len()).collect();
        f(&all)?;
        match bootstrap_ci(units.len(), |d| f(&expand(&units, d)), cfg.iterations, cfg.level, seed::derive(cfg.seed, label)) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("arm {arm}, {label}: {e}");
                None
            }
        }
    };
    let heads = Head::ALL
        .iter()
        .map(|&h| run(&format!("eval:{}", h.name()), &|d: &[usize]| head_metric(probs, labels, d, h)))
        .collect();
    let overall = FAMILIES
        .iter()
        .map(|&fam| {
            let hs: Vec<Head> = Head::ALL.iter().copied().filter(|h| h.family() == fam).collect();
            run(&format!("eval:overall:{}", family_name(fam)), &|d: &[usize]| family_metric(probs, labels, d, &hs, cfg.overall))
        })
        .collect();
    ArmEvaluation {
        arm: arm.to_string(),
        heads,
        overall,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub metric: MetricResult,
    pub comparison: Option<ComparisonResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub family: TaskFamily,
    pub outcome: String,
    /// One entry per report arm; `None` marks an explicit gap.
    pub cells: Vec<Option<ReportCell>>,
    /// Arm index with the highest point estimate.
    pub best: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub arms: Vec<String>,
    pub baseline: String,
    pub has_significance: bool,
    pub rows: Vec<ReportRow>,
}

/// Assembles outcome rows for `arms`, comparing each against `baseline`.
///
/// Arms listed but absent from `results` become gaps.
pub fn build_report(arms: &[String], baseline: &str, results: &[ArmEvaluation]) -> ExperimentReport {
    let find = |a: &str| results.iter().find(|r| r.arm == a);
    let base = find(baseline);
    let has_significance = base.is_some() && arms.iter().filter(|a| find(a).is_some()).count() > 1;
    let mut rows = Vec::new();
    for (fi, &fam) in FAMILIES.iter().enumerate() {
        let mut specs: Vec<(String, Box<dyn Fn(&ArmEvaluation) -> Option<&MetricResult>>)> = Vec::new();
        for h in Head::ALL.iter().copied().filter(|h| h.family() == fam) {
            specs.push((h.display_name().to_string(), Box::new(move |r: &ArmEvaluation| r.heads[h.index()].as_ref())));
        }
        specs.push(("Overall".to_string(), Box::new(move |r: &ArmEvaluation| r.overall[fi].as_ref())));
        for (outcome, get) in specs {
            let base_metric = base.and_then(|b| get(b));
            let cells: Vec<Option<ReportCell>> = arms
                .iter()
                .map(|a| {
                    let m = find(a).and_then(|r| get(r))?;
                    let comparison = match (has_significance && a != baseline, base_metric) {
                        (true, Some(bm)) => Some(ComparisonResult::new(&outcome, m, bm)),
                        _ => None,
                    };
                    Some(ReportCell {
                        metric: m.clone(),
                        comparison,
                    })
                })
                .collect();
            let best = cells
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.as_ref().map(|c| (i, c.metric.point)))
                .fold(None, |acc: Option<(usize, f64)>, (i, p)| match acc {
                    Some((_, bp)) if bp >= p => acc,
                    _ => Some((i, p)),
                })
                .map(|(i, _)| i);
            rows.push(ReportRow {
                family: fam,
                outcome,
                cells,
                best,
            });
        }
    }
    ExperimentReport {
        arms: arms.to_vec(),
        baseline: baseline.to_string(),
        has_significance,
        rows,
    }
}

impl ExperimentReport {
    pub fn row(&self, family: TaskFamily, outcome: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.family == family && r.outcome == outcome)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "family", "outcome", "arm", "auroc", "ci_low", "ci_high", "p_value", "tier", "marker", "direction", "color", "best",
        ])?;
        for row in &self.rows {
            for (i, arm) in self.arms.iter().enumerate() {
                let best = if row.best == Some(i) { "1" } else { "0" };
                let mut rec = vec![family_name(row.family).to_string(), row.outcome.clone(), arm.clone()];
                match &row.cells[i] {
                    None => rec.extend(["", "", "", "", "", "", "", "", "gap"].map(String::from)),
                    Some(c) => {
                        rec.push(format!("{:.6}", c.metric.point));
                        rec.push(format!("{:.6}", c.metric.ci_low));
                        rec.push(format!("{:.6}", c.metric.ci_high));
                        match &c.comparison {
                            Some(cmp) => {
                                rec.push(format!("{:.6e}", cmp.p_value));
                                rec.push(cmp.tier.label().to_string());
                                rec.push(cmp.tier.marker().to_string());
                                rec.push(format!("{:?}", cmp.direction).to_lowercase());
                                rec.push(cmp.color().to_string());
                            }
                            None => rec.extend(["", "", "", "", ""].map(String::from)),
                        }
                        rec.push(best.to_string());
                    }
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Markdown tables, one per task family; the best arm is bold.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        for fam in FAMILIES {
            let _ = writeln!(s, "### {}\n", family_name(fam));
            let _ = writeln!(s, "| Outcome | {} |", self.arms.join(" | "));
            let _ = writeln!(s, "|---|{}", "---|".repeat(self.arms.len()));
            for row in self.rows.iter().filter(|r| r.family == fam) {
                let cells: Vec<String> = row
                    .cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| match c {
                        None => "--".to_string(),
                        Some(c) => {
                            let mark = c.comparison.as_ref().map_or("", |x| x.tier.marker());
                            let body = format!("{:.2} ({:.2}-{:.2}){}", c.metric.point, c.metric.ci_low, c.metric.ci_high, mark.replace('*', "\\*"));
                            if row.best == Some(i) {
                                format!("**{body}**")
                            } else {
                                body
                            }
                        }
                    })
                    .collect();
                let _ = writeln!(s, "| {} | {} |", row.outcome, cells.join(" | "));
            }
            s.push('\n');
        }
        let _ = writeln!(s, "AUROC (95% bootstrap CI). \\*: p<0.05, \\*\\*: p<0.001, Wilcoxon rank-sum against {} over bootstrap AUROCs. Bold: best arm.", self.baseline);
        s
    }

    /// Fixed-width table: outcome rows, arm columns, best arm in brackets.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = 24;
        for fam in FAMILIES {
            let _ = writeln!(s, "== {} ==", family_name(fam));
            let _ = write!(s, "{:<22}", "outcome");
            for a in &self.arms {
                let _ = write!(s, "{a:>width$}");
            }
            s.push('\n');
            for row in self.rows.iter().filter(|r| r.family == fam) {
                let _ = write!(s, "{:<22}", row.outcome);
                for (i, c) in row.cells.iter().enumerate() {
                    let cell = match c {
                        None => "--".to_string(),
                        Some(c) => {
                            let mark = c.comparison.as_ref().map_or("", |x| x.tier.marker());
                            let body = format!("{:.2} ({:.2}-{:.2}){}", c.metric.point, c.metric.ci_low, c.metric.ci_high, mark);
                            if row.best == Some(i) {
                                format!("[{body}]")
                            } else {
                                body
                            }
                        }
                    };
                    let _ = write!(s, "{cell:>width$}");
                }
                s.push('\n');
            }
            s.push('\n');
        }
        s.push_str("*: p<0.05, **: p<0.001 (Wilcoxon rank-sum vs ");
        s.push_str(&self.baseline);
        s.push_str(" over bootstrap AUROCs); [ ]: best arm\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn synthetic(n: usize, signal: f64, seed_: u64) -> (Vec<[f64; N_HEADS]>, Vec<LabelSet>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed_);
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let mut ls = LabelSet::UNDEFINED;
            let mut p = [0.0; N_HEADS];
            for h in Head::ALL {
                let y = rng.random::<f64>() < 0.3;
                ls.set(h, y);
                p[h.index()] = rng.random::<f64>() + if y { signal } else { 0.0 };
            }
            probs.push(p);
            labels.push(ls);
        }
        (probs, labels)
    }

    #[test]
    fn tiers_follow_thresholds() {
        assert_eq!(Tier::from_p(0.0005), Tier::HighlySignificant);
        assert_eq!(Tier::from_p(0.001), Tier::Significant);
        assert_eq!(Tier::from_p(0.049), Tier::Significant);
        assert_eq!(Tier::from_p(0.05), Tier::NotSignificant);
    }

    #[test]
    fn single_arm_has_no_significance() {
        let (p, l) = synthetic(300, 0.3, 1);
        let e = evaluate_arm("ehr", &p, &l, &[], &EvalConfig::default());
        let r = build_report(&["ehr".into()], "ehr", &[e]);
        assert!(!r.has_significance);
        assert!(r.rows.iter().all(|row| row.cells[0].as_ref().unwrap().comparison.is_none()));
        assert_eq!(r.rows.len(), 12);
    }

    #[test]
    fn identical_arms_are_not_significant() {
        let (p, l) = synthetic(300, 0.3, 2);
        let cfg = EvalConfig::default();
        let a = evaluate_arm("ehr", &p, &l, &[], &cfg);
        let b = evaluate_arm("all", &p, &l, &[], &cfg);
        assert_eq!(a.heads, b.heads);
        let r = build_report(&["ehr".into(), "all".into()], "ehr", &[a, b]);
        assert!(r.has_significance);
        for row in &r.rows {
            let cmp = row.cells[1].as_ref().unwrap().comparison.as_ref().unwrap();
            assert_eq!(cmp.tier, Tier::NotSignificant);
            assert_eq!(cmp.p_value, 1.0);
        }
    }

    #[test]
    fn stronger_arm_wins_and_is_marked() {
        let (p0, l) = synthetic(600, 0.1, 3);
        let (p1, _) = synthetic(600, 0.1, 3);
        // Same labels, sharper scores for the second arm.
        let p1: Vec<[f64; N_HEADS]> = p1
            .iter()
            .zip(&l)
            .map(|(p, ls)| {
                let mut q = *p;
                for h in Head::ALL {
                    if ls.get(h) == Some(true) {
                        q[h.index()] += 0.5;
                    }
                }
                q
            })
            .collect();
        let cfg = EvalConfig::default();
        let base = evaluate_arm("ehr", &p0, &l, &[], &cfg);
        let all = evaluate_arm("all", &p1, &l, &[], &cfg);
        let r = build_report(&["ehr".into(), "all".into(), "ehr+env".into()], "ehr", &[base, all]);
        let row = r.row(TaskFamily::Transition, "Overall").unwrap();
        assert_eq!(row.best, Some(1));
        let cmp = row.cells[1].as_ref().unwrap().comparison.as_ref().unwrap();
        assert_eq!((cmp.tier, cmp.direction, cmp.color()), (Tier::HighlySignificant, Direction::Up, "green"));
        assert!(row.cells[2].is_none());
        let text = r.to_text();
        assert!(text.contains("**]"));
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains(",gap"));
    }

    #[test]
    fn micro_and_macro_overall_differ_but_agree_on_perfect_scores() {
        let (_, l) = synthetic(200, 0.0, 4);
        let perfect: Vec<[f64; N_HEADS]> = l
            .iter()
            .map(|ls| {
                let mut q = [0.0; N_HEADS];
                for h in Head::ALL {
                    q[h.index()] = if ls.get(h) == Some(true) { 1.0 } else { 0.0 };
                }
                q
            })
            .collect();
        for mode in [OverallMode::Micro, OverallMode::Macro] {
            let cfg = EvalConfig { overall: mode, ..EvalConfig::default() };
            let e = evaluate_arm("x", &perfect, &l, &[], &cfg);
            assert_eq!(e.overall[0].as_ref().unwrap().point, 1.0);
        }
    }

    #[test]
    fn patient_unit_resamples_groups() {
        let (p, l) = synthetic(120, 0.4, 5);
        let groups: Vec<String> = (0..120).map(|i| format!("p{}", i / 6)).collect();
        let cfg = EvalConfig { unit: BootstrapUnit::Patient, ..EvalConfig::default() };
        let e = evaluate_arm("x", &p, &l, &groups, &cfg);
        assert!(e.heads.iter().all(|h| h.is_some()));
    }

    #[test]
    fn undefined_head_is_a_gap() {
        let (p, mut l) = synthetic(50, 0.2, 6);
        for ls in l.iter_mut() {
            ls.set(Head::Deceased, false);
        }
        let e = evaluate_arm("x", &p, &l, &[], &EvalConfig::default());
        assert!(e.heads[Head::Deceased.index()].is_none());
    }
}
