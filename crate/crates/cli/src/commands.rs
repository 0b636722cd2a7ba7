//! One function per subcommand. Each reads only its declared input directories,
//! writes its artifacts into `out` and finishes with a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::Duration;
use rand::seq::SliceRandom;

use acuity_core::attribution::{attribute_windows, AttributionReport, FeatureNames};
use acuity_core::data::io::{read_cohort, write_cohort};
use acuity_core::data::labels::{LabelSet, N_HEADS};
use acuity_core::data::record::STATIC_DIM;
use acuity_core::data::split::{split_cohort, CohortSplit};
use acuity_core::features::normalize::{fit_normalizer, Normalizer};
use acuity_core::features::table::{read_features_csv, write_features_csv, write_windows_csv};
use acuity_core::features::{extract_cohort, EhrSchema, ObservationWindow, SplitWindows};
use acuity_core::nn::Checkpoint;
use acuity_core::stats::{build_report, evaluate_arm, ExperimentReport};
use acuity_core::synth::{generate_cohort, GenConfig};
use acuity_core::train::{experiment_arm_filter, predict, train, write_log_jsonl, Arm};
use acuity_core::{seed, Model};

use crate::config::RunConfig;
use crate::errors::{coded, Code};
use crate::manifest::{sha256_hex, RunWriter, VerifiedRun};

fn json<T: serde::Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn parse_json<T: serde::de::DeserializeOwned>(run: &VerifiedRun, name: &str) -> Result<T> {
    serde_json::from_slice(&run.read(name)?).map_err(|e| coded(Code::Schema, format!("{} artifact {name}: {e}", run.dir.display())))
}

fn features_bytes(schema: &EhrSchema, windows: &[ObservationWindow]) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    write_features_csv(&mut b, schema, windows)?;
    Ok(b)
}

fn read_windows(run: &VerifiedRun, name: &str, schema: &EhrSchema) -> Result<Vec<ObservationWindow>> {
    let bytes = run.read(name)?;
    read_features_csv(BufReader::new(bytes.as_slice()), schema).with_context(|| format!("reading {name} windows from {}", run.dir.display()))
}

/// Generates a synthetic cohort.
pub fn synth(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let cohort = generate_cohort(&cfg.synth)?;
    let mut w = RunWriter::create(out, "synth", &cfg.hash(), cfg.seed)?;
    let mut buf = Vec::new();
    write_cohort(&mut buf, &cohort)?;
    w.write("cohort", "cohort.jsonl", &buf)?;
    w.write("gen_config", "gen_config.json", &json(&cfg.synth)?)?;
    w.finish()?;
    log::info!("synth: {} patients -> {}", cohort.len(), out.display());
    Ok(out.to_path_buf())
}

/// Segments the cohort into observation windows and extracts every feature block.
pub fn extract(cfg: &RunConfig, cohort_dir: &Path, out: &Path) -> Result<PathBuf> {
    let input = VerifiedRun::open(cohort_dir, "synth")?;
    let gen: GenConfig = parse_json(&input, "gen_config")?;
    let schema = gen.ehr_schema();
    let cohort = read_cohort(BufReader::new(input.read("cohort")?.as_slice()))?;
    let windows = extract_cohort(&cohort, &schema, Duration::hours(gen.window_hours))?;
    let mut w = RunWriter::create(out, "extract", &cfg.hash(), cfg.seed)?;
    w.input(&input);
    w.write("features", "features.csv", &features_bytes(&schema, &windows)?)?;
    let mut labels = Vec::new();
    write_windows_csv(&mut labels, &windows)?;
    w.write("windows", "windows.csv", &labels)?;
    w.write("schema", "schema.json", &json(&schema)?)?;
    w.finish()?;
    log::info!("extract: {} windows from {} patients", windows.len(), cohort.len());
    Ok(out.to_path_buf())
}

/// Patient-level split plus a normalizer fitted on the training windows.
pub fn split(cfg: &RunConfig, features_dir: &Path, out: &Path) -> Result<PathBuf> {
    let input = VerifiedRun::open(features_dir, "extract")?;
    let schema: EhrSchema = parse_json(&input, "schema")?;
    let windows = read_windows(&input, "features", &schema)?;
    let ids: Vec<String> = windows.iter().map(|w| w.patient_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let split = split_cohort(&ids, cfg.seed)?;
    let parts = SplitWindows::partition(windows, &split);
    let norm = fit_normalizer(&parts.train, schema.n_vars())?;
    let parts = parts.map(|w| norm.apply(w));

    let mut w = RunWriter::create(out, "split", &cfg.hash(), cfg.seed)?;
    w.input(&input);
    let split_json = json(&split)?;
    let norm_json = json(&norm)?;
    w.write("split", "split.json", &split_json)?;
    w.write("normalizer", "normalizer.json", &norm_json)?;
    w.write("schema", "schema.json", &json(&schema)?)?;
    let mut digest = sha256_hex(&split_json) + &sha256_hex(&norm_json);
    for (name, ws) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
        let bytes = features_bytes(&schema, ws)?;
        digest += &sha256_hex(&bytes);
        w.write(name, &format!("{name}.csv"), &bytes)?;
    }
    let split_hash = sha256_hex(digest.as_bytes());
    w.split_hash(&split_hash);
    w.finish()?;
    log::info!(
        "split: {} / {} / {} patients, {} / {} / {} windows, hash {}",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        parts.train.len(),
        parts.val.len(),
        parts.test.len(),
        &split_hash[..12]
    );
    Ok(out.to_path_buf())
}

struct SplitData {
    run: VerifiedRun,
    schema: EhrSchema,
    split_hash: String,
}

fn open_split(dir: &Path) -> Result<SplitData> {
    let run = VerifiedRun::open(dir, "split")?;
    let schema: EhrSchema = parse_json(&run, "schema")?;
    let split_hash = run.split_hash()?.to_string();
    // both are parsed so a damaged split directory fails early
    let _: CohortSplit = parse_json(&run, "split")?;
    let _: Normalizer = parse_json(&run, "normalizer")?;
    Ok(SplitData { run, schema, split_hash })
}

/// Trains one arm on a split directory.
pub fn train_arm(cfg: &RunConfig, split_dir: &Path, arm: Arm, out: &Path) -> Result<PathBuf> {
    let sd = open_split(split_dir)?;
    let m = &cfg.train.model;
    if m.ehr_vars != sd.schema.n_vars() || m.ehr_steps != sd.schema.steps || m.static_dim != STATIC_DIM {
        return Err(coded(
            Code::Config,
            format!(
                "model expects {} EHR variables x {} steps and {} static features; the split has {} x {} and {STATIC_DIM}",
                m.ehr_vars,
                m.ehr_steps,
                m.static_dim,
                sd.schema.n_vars(),
                sd.schema.steps
            ),
        ));
    }
    let train_w = read_windows(&sd.run, "train", &sd.schema)?;
    let val_w = read_windows(&sd.run, "val", &sd.schema)?;
    let mut tcfg = cfg.train.clone();
    tcfg.arm = arm;
    let outcome = train(&train_w, &val_w, &tcfg)?;

    let mut meta = BTreeMap::new();
    meta.insert("arm".to_string(), arm.name().to_string());
    meta.insert("split_hash".to_string(), sd.split_hash.clone());
    meta.insert("best_epoch".to_string(), format!("{:?}", outcome.best_epoch));
    meta.insert("best_metric".to_string(), format!("{:?}", outcome.best_metric));
    meta.insert("stopped_epoch".to_string(), outcome.stopped_epoch.to_string());
    let ckpt = Checkpoint::from_model(&outcome.model, meta);

    let mut w = RunWriter::create(out, "train", &cfg.hash(), cfg.seed)?;
    w.input(&sd.run);
    w.arm(arm.name());
    w.split_hash(&sd.split_hash);
    let mut buf = Vec::new();
    ckpt.write(&mut buf)?;
    w.write("checkpoint", "checkpoint.json", &buf)?;
    let mut log_buf = Vec::new();
    write_log_jsonl(&mut log_buf, &outcome.log)?;
    w.write("log", "train_log.jsonl", &log_buf)?;
    w.write("train_config", "train_config.json", &json(&tcfg)?)?;
    w.finish()?;
    log::info!(
        "train {arm}: best epoch {:?} metric {:?}, stopped at {}{}",
        outcome.best_epoch,
        outcome.best_metric,
        outcome.stopped_epoch,
        if outcome.early_stopped { " (early stop)" } else { "" }
    );
    Ok(out.to_path_buf())
}

struct TrainedArm {
    run: VerifiedRun,
    arm: Arm,
    model: Model,
}

fn open_trained(dir: &Path, split_hash: &str) -> Result<TrainedArm> {
    let run = VerifiedRun::open(dir, "train")?;
    if run.split_hash()? != split_hash {
        return Err(coded(
            Code::SplitMismatch,
            format!("{} was trained on split {} but the split directory is {}", dir.display(), run.split_hash()?, split_hash),
        ));
    }
    let arm: Arm = run
        .manifest
        .arm
        .as_deref()
        .ok_or_else(|| coded(Code::Schema, format!("{} records no arm", dir.display())))?
        .parse()?;
    let ckpt = Checkpoint::read(run.read("checkpoint")?.as_slice())?;
    if ckpt.meta.get("split_hash").map(String::as_str) != Some(split_hash) {
        return Err(coded(Code::SplitMismatch, format!("{} checkpoint metadata names a different split", dir.display())));
    }
    let model = ckpt.to_model()?;
    Ok(TrainedArm { run, arm, model })
}

/// Column label per run: the arm name, suffixed when an arm appears twice.
fn column_labels(arms: &[Arm]) -> Vec<String> {
    let mut seen: BTreeMap<Arm, usize> = BTreeMap::new();
    arms.iter()
        .map(|a| {
            let n = seen.entry(*a).or_insert(0);
            *n += 1;
            if *n == 1 {
                a.name().to_string()
            } else {
                format!("{}#{n}", a.name())
            }
        })
        .collect()
}

/// Scores every run on the shared test split and compares each with the baseline arm.
pub fn eval(cfg: &RunConfig, split_dir: &Path, run_dirs: &[PathBuf], out: &Path) -> Result<PathBuf> {
    if run_dirs.is_empty() {
        return Err(coded(Code::Config, "eval needs at least one training run"));
    }
    let sd = open_split(split_dir)?;
    let mut runs = run_dirs.iter().map(|d| open_trained(d, &sd.split_hash)).collect::<Result<Vec<_>>>()?;
    // report columns follow the fixed arm order, then the order given
    runs.sort_by_key(|r| r.arm);
    let labels_by_col = column_labels(&runs.iter().map(|r| r.arm).collect::<Vec<_>>());
    let test = read_windows(&sd.run, "test", &sd.schema)?;
    let labels: Vec<_> = test.iter().map(|w| w.labels).collect();
    let groups: Vec<String> = test.iter().map(|w| w.patient_id.clone()).collect();
    let mut evals = Vec::new();
    for (r, col) in runs.iter().zip(&labels_by_col) {
        let probs = predict(&r.model, &test, r.arm)?;
        evals.push(evaluate_arm(col, &probs, &labels, &groups, &cfg.eval));
    }
    let baseline = cfg.baseline.name();
    if !labels_by_col.iter().any(|c| c == baseline) {
        log::warn!("baseline arm {baseline} is not among the evaluated runs; no significance tests");
    }
    let report = build_report(&labels_by_col, baseline, &evals);

    let mut w = RunWriter::create(out, "eval", &cfg.hash(), cfg.seed)?;
    w.input(&sd.run);
    for r in &runs {
        w.input(&r.run);
    }
    w.split_hash(&sd.split_hash);
    w.write("evaluations", "evaluations.json", &json(&evals)?)?;
    w.write("report", "report.json", &json(&report)?)?;
    let mut csv_buf = Vec::new();
    report.write_csv(&mut csv_buf)?;
    w.write("report_csv", "report.csv", &csv_buf)?;
    w.write("report_text", "report.txt", report.to_text().as_bytes())?;
    w.finish()?;
    Ok(out.to_path_buf())
}

/// Test-split probabilities of one trained run, with the window labels.
pub fn score_test_split(split_dir: &Path, run_dir: &Path) -> Result<(Vec<[f64; N_HEADS]>, Vec<LabelSet>)> {
    let sd = open_split(split_dir)?;
    let t = open_trained(run_dir, &sd.split_hash)?;
    let test = read_windows(&sd.run, "test", &sd.schema)?;
    let probs = predict(&t.model, &test, t.arm)?;
    Ok((probs, test.iter().map(|w| w.labels).collect()))
}

/// Integrated-gradients rankings for one trained arm on a seeded sample of test windows.
pub fn attribute(cfg: &RunConfig, run_dir: &Path, split_dir: &Path, out: &Path) -> Result<PathBuf> {
    let sd = open_split(split_dir)?;
    let t = open_trained(run_dir, &sd.split_hash)?;
    let test = read_windows(&sd.run, "test", &sd.schema)?;
    let ac = &cfg.attribution;
    let mut idx: Vec<usize> = (0..test.len()).collect();
    idx.shuffle(&mut seed::rng(cfg.seed, "attribution"));
    idx.truncate(ac.max_windows);
    idx.sort_unstable();
    let chosen: Vec<ObservationWindow> = idx.iter().map(|&i| experiment_arm_filter(&test[i], t.arm)).collect();
    let names = FeatureNames::new(&sd.schema);
    let report = attribute_windows(&t.model, &chosen, &ac.heads, ac.steps, &names, ac.top_k)?;
    if let Some(r) = report.max_residual() {
        if r >= 0.01 {
            log::warn!("attribution: max completeness residual {r:.4} is at or above 1%");
        }
    }

    let mut w = RunWriter::create(out, "attribute", &cfg.hash(), cfg.seed)?;
    w.input(&sd.run);
    w.input(&t.run);
    w.arm(t.arm.name());
    w.split_hash(&sd.split_hash);
    let mut csv_buf = Vec::new();
    report.write_csv(&mut csv_buf)?;
    w.write("attribution_csv", "attribution.csv", &csv_buf)?;
    w.write("residuals_csv", "residuals.csv", &residuals_csv(&report)?)?;
    w.write("attribution", "attribution.json", &json(&report)?)?;
    w.write("top_features", "top_features.txt", top_features_text(&report).as_bytes())?;
    w.finish()?;
    Ok(out.to_path_buf())
}

fn residuals_csv(report: &AttributionReport) -> Result<Vec<u8>> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["patient_id", "window_index", "head", "f_input", "f_baseline", "attribution_sum", "residual"])?;
    for r in &report.residuals {
        wr.write_record([
            r.patient_id.clone(),
            r.window_index.to_string(),
            r.head.name().to_string(),
            format!("{:e}", r.f_input),
            format!("{:e}", r.f_baseline),
            format!("{:e}", r.attribution_sum),
            r.residual.map(|v| format!("{v:e}")).unwrap_or_default(),
        ])?;
    }
    Ok(wr.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

/// Top-k features per head and modality, one block per head.
pub fn top_features_text(report: &AttributionReport) -> String {
    use acuity_core::data::mask::Modality;
    let mut s = format!("integrated gradients, {} steps, top {} per modality\n", report.steps, report.top_k);
    let heads: BTreeSet<_> = report.features.iter().map(|f| f.head).collect();
    for h in heads {
        s += &format!("\n[{}]\n", h.display_name());
        for m in Modality::ALL {
            let top = report.top(h, m);
            if top.is_empty() {
                continue;
            }
            let items: Vec<String> = top.iter().map(|f| format!("{} ({:.3e})", f.feature, f.mean_abs_attr)).collect();
            s += &format!("  {:<6} {}\n", m.name(), items.join(", "));
        }
    }
    s
}

/// Renders an evaluation as text and markdown tables.
pub fn report(cfg: &RunConfig, eval_dir: &Path, out: &Path) -> Result<(PathBuf, String)> {
    let input = VerifiedRun::open(eval_dir, "eval")?;
    let rep: ExperimentReport = parse_json(&input, "report")?;
    let text = rep.to_text();
    let mut w = RunWriter::create(out, "report", &cfg.hash(), cfg.seed)?;
    w.input(&input);
    if let Some(h) = &input.manifest.split_hash {
        w.split_hash(h);
    }
    w.write("text", "tables.txt", text.as_bytes())?;
    w.write("markdown", "tables.md", rep.to_markdown().as_bytes())?;
    w.finish()?;
    Ok((out.to_path_buf(), text))
}

/// Directories written by `pipeline`.
#[derive(Debug, Clone)]
pub struct PipelineDirs {
    pub cohort: PathBuf,
    pub features: PathBuf,
    pub split: PathBuf,
    pub runs: Vec<(Arm, PathBuf)>,
    pub eval: PathBuf,
    pub attribution: Option<PathBuf>,
    pub report: PathBuf,
}

impl PipelineDirs {
    pub fn under(root: &Path, arms: &[Arm]) -> Self {
        PipelineDirs {
            cohort: root.join("cohort"),
            features: root.join("features"),
            split: root.join("split"),
            runs: arms.iter().map(|a| (*a, root.join("runs").join(a.name()))).collect(),
            eval: root.join("eval"),
            attribution: Some(root.join("attribution")),
            report: root.join("report"),
        }
    }
}

/// The full grid: synth, extract, split, train every configured arm, evaluate,
/// attribute the configured arm (when it was trained) and render the tables.
pub fn pipeline(cfg: &RunConfig, root: &Path) -> Result<(PipelineDirs, String)> {
    let mut arms = cfg.arms.clone();
    arms.sort();
    arms.dedup();
    let mut dirs = PipelineDirs::under(root, &arms);
    synth(cfg, &dirs.cohort)?;
    extract(cfg, &dirs.cohort, &dirs.features)?;
    split(cfg, &dirs.features, &dirs.split)?;
    for (arm, dir) in &dirs.runs {
        train_arm(cfg, &dirs.split, *arm, dir)?;
    }
    let run_dirs: Vec<PathBuf> = dirs.runs.iter().map(|r| r.1.clone()).collect();
    eval(cfg, &dirs.split, &run_dirs, &dirs.eval)?;
    match dirs.runs.iter().find(|r| r.0 == cfg.attribution.arm) {
        Some((_, run)) => {
            attribute(cfg, run, &dirs.split, dirs.attribution.as_ref().expect("set"))?;
        }
        None => dirs.attribution = None,
    }
    let (_, text) = report(cfg, &dirs.eval, &dirs.report)?;
    Ok((dirs, text))
}
