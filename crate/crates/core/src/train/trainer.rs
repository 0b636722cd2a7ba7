//! Mini-batch training with early stopping on the critical-task validation AUROC.

use std::cell::RefCell;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::labels::{Head, LabelSet, N_HEADS};
use crate::error::{Error, Result};
use crate::features::window::ObservationWindow;
use crate::nn::{FusionModel, Model, ModelConfig, ModelInput};
use crate::seed;
use crate::stats::auroc::auroc_defined;

use super::arm::{experiment_arm_filter, Arm};
use super::early_stop::{run_epochs, Verdict};
use super::loss::{masked_bce_from_logits, ClassWeights};
use super::optim::{Adam, AdamConfig};

/// How the three critical-head AUROCs combine into the selection metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Mean,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub class_weight_cap: f64,
    pub seed: u64,
    pub arm: Arm,
    pub selection: Selection,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 40,
            patience: 10,
            class_weight_cap: 20.0,
            seed: 20240501,
            arm: Arm::All,
            selection: Selection::Mean,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.class_weight_cap >= 1.0) {
            return bad("class_weight_cap must be at least 1");
        }
        self.model.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation AUROC per head in head order; `None` when a class is missing.
    pub val_auroc: Vec<Option<f64>>,
    pub selection_metric: Option<f64>,
    pub improved: bool,
    pub best_epoch: Option<usize>,
    pub epochs_since_improvement: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub model: Model,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub stopped_epoch: usize,
    pub early_stopped: bool,
    pub class_weights: ClassWeights,
    pub log: Vec<EpochRecord>,
}

/// Samples per gradient partial sum. Partials are reduced in index order, so the
/// result does not depend on the number of threads.
const GRAD_CHUNK: usize = 16;

fn inputs(windows: &[ObservationWindow], arm: Arm) -> Vec<(ModelInput<f64>, LabelSet)> {
    windows
        .iter()
        .map(|w| {
            let f = experiment_arm_filter(w, arm);
            (ModelInput::from_window(&f), f.labels)
        })
        .collect()
}

/// Probabilities of every window under `arm`, in input order.
pub fn predict(model: &Model, windows: &[ObservationWindow], arm: Arm) -> Result<Vec<[f64; N_HEADS]>> {
    windows
        .par_iter()
        .map(|w| model.predict(&ModelInput::from_window(&experiment_arm_filter(w, arm))))
        .collect()
}

/// AUROC per head over windows where the head's label is defined.
pub fn head_aurocs(probs: &[[f64; N_HEADS]], labels: &[LabelSet]) -> Vec<Option<f64>> {
    (0..N_HEADS)
        .map(|h| {
            let scores: Vec<f64> = probs.iter().map(|p| p[h]).collect();
            let y: Vec<Option<bool>> = labels.iter().map(|l| l.0[h]).collect();
            auroc_defined(&scores, &y)
        })
        .collect()
}

/// Combines the defined critical-head AUROCs; `None` if none is defined.
pub fn selection_metric(aurocs: &[Option<f64>], rule: Selection) -> Option<f64> {
    let vals: Vec<f64> = Head::CRITICAL.iter().filter_map(|h| aurocs[h.index()]).collect();
    if vals.is_empty() {
        return None;
    }
    Some(match rule {
        Selection::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
        Selection::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

fn check_critical_positives(val: &[ObservationWindow]) -> Result<()> {
    let has_pos = |h: Head| val.iter().any(|w| w.labels.get(h) == Some(true));
    if Head::CRITICAL.iter().any(|&h| has_pos(h)) {
        return Ok(());
    }
    let names: Vec<&str> = Head::CRITICAL.iter().map(|h| h.name()).collect();
    Err(Error::NoCriticalPositives(names.join(", ")))
}

struct TrainState {
    model: Model,
    adam: Adam<f64>,
    best_params: Option<Vec<f64>>,
    log: Vec<EpochRecord>,
    pending: Option<EpochRecord>,
}

/// Trains one arm on normalized windows and returns the best-epoch model.
pub fn train(train_set: &[ObservationWindow], val_set: &[ObservationWindow], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    check_critical_positives(val_set)?;

    let arm = cfg.arm;
    let train_in = inputs(train_set, arm);
    let val_in = inputs(val_set, arm);
    let val_labels: Vec<LabelSet> = val_in.iter().map(|(_, l)| *l).collect();
    let weights = ClassWeights::from_labels(train_in.iter().map(|(_, l)| l), cfg.class_weight_cap);

    let model: Model = FusionModel::new(cfg.model.clone(), seed::derive(cfg.seed, &format!("arm:{arm}")))?;
    let n_params = model.n_params();
    let adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        n_params,
    );
    let state = RefCell::new(TrainState {
        model,
        adam,
        best_params: None,
        log: Vec::new(),
        pending: None,
    });

    let epoch = |e: usize| -> Result<Option<f64>> {
        let mut st = state.borrow_mut();
        let mut order: Vec<usize> = (0..train_in.len()).collect();
        order.shuffle(&mut seed::rng(cfg.seed, &format!("arm:{arm}:epoch:{e}")));
        let mut total_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let model = &st.model;
            let partials: Vec<(f64, Vec<f64>)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| -> Result<(f64, Vec<f64>)> {
                    let mut g = vec![0.0; n_params];
                    let mut loss = 0.0;
                    for &i in chunk {
                        let (x, labels) = &train_in[i];
                        let t = model.forward(x)?;
                        let (l, d) = masked_bce_from_logits(&t.logits, &t.probs, labels, &weights);
                        loss += l;
                        if d.iter().any(|&v| v != 0.0) {
                            model.backward(&t, &d, &mut g);
                        }
                    }
                    Ok((loss, g))
                })
                .collect::<Result<_>>()?;
            let mut grads = vec![0.0; n_params];
            for (l, g) in &partials {
                total_loss += l;
                for (a, b) in grads.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            let TrainState { model, adam, .. } = &mut *st;
            adam.step(&mut model.params, &grads);
        }

        let model = &st.model;
        let outputs: Vec<(f64, [f64; N_HEADS])> = val_in
            .par_iter()
            .map(|(x, labels)| {
                let t = model.forward(x)?;
                Ok((masked_bce_from_logits(&t.logits, &t.probs, labels, &weights).0, t.probs))
            })
            .collect::<Result<_>>()?;
        let val_loss = outputs.iter().map(|o| o.0).sum::<f64>() / outputs.len() as f64;
        let probs: Vec<[f64; N_HEADS]> = outputs.iter().map(|o| o.1).collect();
        let aurocs = head_aurocs(&probs, &val_labels);
        let metric = selection_metric(&aurocs, cfg.selection);
        st.pending = Some(EpochRecord {
            epoch: e,
            train_loss: total_loss / train_in.len() as f64,
            val_loss,
            val_auroc: aurocs,
            selection_metric: metric,
            improved: false,
            best_epoch: None,
            epochs_since_improvement: 0,
        });
        Ok(metric)
    };

    let on_verdict = |_e: usize, verdict: Verdict, stopper: &super::early_stop::EarlyStopper| -> Result<()> {
        let mut st = state.borrow_mut();
        if verdict == Verdict::Improved {
            st.best_params = Some(st.model.params.clone());
        }
        let mut rec = st.pending.take().expect("epoch ran");
        rec.improved = verdict == Verdict::Improved;
        rec.best_epoch = stopper.best.map(|b| b.0);
        rec.epochs_since_improvement = stopper.since_improvement;
        log::info!(
            "arm {arm} epoch {} train_loss {:.4} val_loss {:.4} metric {:?}",
            rec.epoch,
            rec.train_loss,
            rec.val_loss,
            rec.selection_metric
        );
        st.log.push(rec);
        Ok(())
    };

    let outcome = run_epochs(cfg.max_epochs, cfg.patience, epoch, on_verdict)?;
    let st = state.into_inner();
    let mut model = st.model;
    if let Some(p) = st.best_params {
        model.params = p;
    }
    Ok(TrainOutcome {
        model,
        best_epoch: outcome.best_epoch,
        best_metric: outcome.best_metric,
        stopped_epoch: outcome.stopped_epoch,
        early_stopped: outcome.early_stopped,
        class_weights: weights,
        log: st.log,
    })
}

/// JSON lines, one record per epoch.
pub fn write_log_jsonl<W: Write>(mut out: W, log: &[EpochRecord]) -> Result<()> {
    for r in log {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_log_jsonl(text: &str) -> Result<Vec<EpochRecord>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}
