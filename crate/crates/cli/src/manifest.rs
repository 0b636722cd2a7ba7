//! Self-describing run directories: every command writes `manifest.json` listing
//! its inputs and the content hash of each artifact it produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::{coded, Code};

pub const MANIFEST_VERSION: &str = "acuity-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRef {
    pub command: String,
    pub dir: String,
    pub manifest_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub arm: Option<String>,
    /// Identity of the train/validation/test partition the artifacts depend on.
    pub split_hash: Option<String>,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set.
    pub created: String,
    pub inputs: Vec<InputRef>,
    pub artifacts: BTreeMap<String, Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse::<i64>().ok());
    let t = fixed.and_then(|s| chrono::DateTime::from_timestamp(s, 0)).unwrap_or_else(chrono::Utc::now);
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Collects artifacts while a command writes them.
pub struct RunWriter {
    pub dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    pub fn create(dir: &Path, command: &str, config_hash: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                version: MANIFEST_VERSION.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                config_hash: config_hash.to_string(),
                seed,
                arm: None,
                split_hash: None,
                created: timestamp(),
                inputs: Vec::new(),
                artifacts: BTreeMap::new(),
            },
        })
    }

    pub fn arm(&mut self, arm: &str) {
        self.manifest.arm = Some(arm.to_string());
    }

    pub fn split_hash(&mut self, h: &str) {
        self.manifest.split_hash = Some(h.to_string());
    }

    pub fn input(&mut self, run: &VerifiedRun) {
        self.manifest.inputs.push(InputRef {
            command: run.manifest.command.clone(),
            dir: run.dir.display().to_string(),
            manifest_sha256: run.manifest_sha256.clone(),
        });
    }

    pub fn write(&mut self, name: &str, file: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(file);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.artifacts.insert(
            name.to_string(),
            Artifact {
                path: file.to_string(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            },
        );
        Ok(path)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

/// A run directory whose manifest and artifacts have been checked.
#[derive(Debug, Clone)]
pub struct VerifiedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub manifest_sha256: String,
}

impl VerifiedRun {
    /// Loads `dir/manifest.json`, checks its version and producing command, and
    /// re-hashes every artifact.
    pub fn open(dir: &Path, command: &str) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| coded(Code::MissingArtifact, format!("{}: {e}", path.display())))?;
        let manifest: RunManifest =
            serde_json::from_slice(&bytes).map_err(|e| coded(Code::Schema, format!("{}: {e}", path.display())))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(coded(Code::Schema, format!("{}: manifest version {} (expected {MANIFEST_VERSION})", path.display(), manifest.version)));
        }
        if manifest.command != command {
            return Err(coded(
                Code::Schema,
                format!("{} was written by '{}', expected the output of '{command}'", dir.display(), manifest.command),
            ));
        }
        for (name, a) in &manifest.artifacts {
            let p = dir.join(&a.path);
            let content = fs::read(&p).map_err(|e| coded(Code::MissingArtifact, format!("artifact {name} ({}): {e}", p.display())))?;
            if sha256_hex(&content) != a.sha256 {
                return Err(coded(Code::HashMismatch, format!("artifact {name} ({}) does not match its recorded hash", p.display())));
            }
        }
        Ok(VerifiedRun {
            dir: dir.to_path_buf(),
            manifest,
            manifest_sha256: sha256_hex(&bytes),
        })
    }

    pub fn path(&self, name: &str) -> Result<PathBuf> {
        let a = self
            .manifest
            .artifacts
            .get(name)
            .ok_or_else(|| coded(Code::MissingArtifact, format!("{} has no '{name}' artifact", self.dir.display())))?;
        Ok(self.dir.join(&a.path))
    }

    pub fn read(&self, name: &str) -> Result<Vec<u8>> {
        let p = self.path(name)?;
        fs::read(&p).with_context(|| format!("reading {}", p.display()))
    }

    pub fn split_hash(&self) -> Result<&str> {
        self.manifest
            .split_hash
            .as_deref()
            .ok_or_else(|| coded(Code::Schema, format!("{} records no split hash", self.dir.display())))
    }
}
