//! The single run configuration shared by every command.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use acuity_core::data::labels::Head;
use acuity_core::stats::EvalConfig;
use acuity_core::synth::GenConfig;
use acuity_core::train::{Arm, TrainConfig};

use crate::errors::{coded, Code};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub steps: usize,
    pub top_k: usize,
    /// Test windows attributed, drawn without replacement by a seeded shuffle.
    pub max_windows: usize,
    pub heads: Vec<Head>,
    /// Arm whose checkpoint the pipeline attributes.
    pub arm: Arm,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            steps: acuity_core::attribution::DEFAULT_STEPS,
            top_k: acuity_core::attribution::DEFAULT_TOP_K,
            max_windows: 100,
            heads: Head::ALL.to_vec(),
            arm: Arm::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; overrides the per-section seeds.
    pub seed: u64,
    /// Arms trained by `pipeline`.
    pub arms: Vec<Arm>,
    /// Arm every other arm is compared against.
    pub baseline: Arm,
    pub synth: GenConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub attribution: AttributionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 20240501,
            arms: Arm::ALL.to_vec(),
            baseline: Arm::Ehr,
            synth: GenConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            attribution: AttributionConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file (or the defaults), applies the seed override and
    /// propagates the master seed into every section.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| coded(Code::Config, e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    fn resolve(&mut self) -> Result<()> {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.eval.seed = self.seed;
        let bad = |e: acuity_core::Error| coded(Code::Config, e.to_string());
        self.synth.validate().map_err(bad)?;
        self.train.validate().map_err(bad)?;
        if self.arms.is_empty() {
            return Err(coded(Code::Config, "at least one arm is required"));
        }
        if self.attribution.steps == 0 || self.attribution.top_k == 0 || self.attribution.heads.is_empty() {
            return Err(coded(Code::Config, "attribution needs positive steps and top_k and at least one head"));
        }
        if self.eval.iterations == 0 || !(self.eval.level > 0.0 && self.eval.level < 1.0) {
            return Err(coded(Code::Config, "eval needs positive iterations and a level in (0, 1)"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
