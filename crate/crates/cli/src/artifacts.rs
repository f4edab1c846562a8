//! On-disk layout of a run directory.
//!
//! Every JSON artifact except the model files is wrapped in an [`Envelope`]
//! carrying its kind and format version. Timestamps appear only in
//! `manifest.json`, so all other artifacts are byte-identical across runs
//! with the same config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<T> {
    pub kind: String,
    pub version: u32,
    pub body: T,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn split_csv(&self, name: &str) -> PathBuf {
        self.data_dir().join(format!("{name}.csv"))
    }

    pub fn dataset_json(&self) -> PathBuf {
        self.data_dir().join("dataset.json")
    }

    pub fn baseline(&self) -> PathBuf {
        self.root.join("baseline.json")
    }

    pub fn solution(&self) -> PathBuf {
        self.root.join("solution.json")
    }

    pub fn decisions(&self) -> PathBuf {
        self.root.join("decisions.json")
    }

    pub fn fan_dir(&self) -> PathBuf {
        self.root.join("fan")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval.json")
    }

    pub fn sweep(&self) -> PathBuf {
        self.root.join("sweep.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

/// Fails with a message naming the command that produces `path`.
pub fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing artifact {}; run `fan {producer}` first", path.display());
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    let envelope = Envelope {
        kind: kind.to_string(),
        version: ARTIFACT_VERSION,
        body,
    };
    let mut text = serde_json::to_string_pretty(&envelope)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str, producer: &str) -> Result<T> {
    require(path, producer)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let envelope: Envelope<T> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if envelope.kind != kind || envelope.version != ARTIFACT_VERSION {
        bail!(
            "{} holds a {} v{} artifact, expected {kind} v{ARTIFACT_VERSION}",
            path.display(),
            envelope.kind,
            envelope.version
        );
    }
    Ok(envelope.body)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub finished_unix: u64,
    pub config_sha256: String,
    /// SHA-256 of every file the stage wrote, keyed by path relative to the
    /// run directory.
    pub artifacts: BTreeMap<String, String>,
}

/// Records a finished stage and the hashes of the files it wrote.
pub fn record_stage(layout: &Layout, stage: &str, config_sha256: &str, files: &[PathBuf]) -> Result<()> {
    let path = layout.manifest();
    let mut manifest: Manifest = if path.exists() {
        serde_json::from_str(&std::fs::read_to_string(&path)?).with_context(|| format!("parsing {}", path.display()))?
    } else {
        Manifest::default()
    };
    let mut artifacts = BTreeMap::new();
    for file in files {
        let bytes = std::fs::read(file).with_context(|| format!("reading {}", file.display()))?;
        let key = file
            .strip_prefix(&layout.root)
            .unwrap_or(file)
            .to_string_lossy()
            .replace('\\', "/");
        artifacts.insert(key, sha256_hex(&bytes));
    }
    let finished_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    manifest.stages.insert(
        stage.to_string(),
        StageRecord {
            finished_unix,
            config_sha256: config_sha256.to_string(),
            artifacts,
        },
    );
    write_file(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())
}
