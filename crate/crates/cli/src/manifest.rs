//! Per-stage run manifests and matrix sidecars.

use std::fs;
use std::path::Path;

use nli_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{Loaded, Seeds};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRecord {
    pub non_europe_sampling: u64,
    pub europe_sampling: u64,
    pub split: u64,
    #[serde(flatten)]
    pub run: Seeds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub nli: String,
}

/// Written as `run-manifest.json` into every stage directory. No
/// timestamps, so reruns leave it byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    pub seeds: SeedRecord,
    pub versions: Versions,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(stage: &str, loaded: &Loaded, mut outputs: Vec<String>) -> Self {
        outputs.sort();
        let s = &loaded.config.sampling;
        RunManifest {
            stage: stage.to_string(),
            config_hash: loaded.hash.clone(),
            seeds: SeedRecord {
                non_europe_sampling: s.non_europe.seed,
                europe_sampling: s.europe.seed,
                split: s.split_seed,
                run: loaded.config.seeds,
            },
            versions: Versions {
                nli: env!("CARGO_PKG_VERSION").to_string(),
            },
            outputs,
        }
    }
}

/// Sidecar `<matrix>.meta.json` describing how a matrix was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub config_hash: String,
    pub model: String,
    /// Vocabulary fingerprint for linguistic features, model tag and input
    /// size for embeddings; train and out-of-sample matrices must agree.
    pub fingerprint: String,
    pub dim: usize,
    pub rows: usize,
    pub duration_hours: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{}: {e}", path.display())))
}

pub fn meta_path(matrix: &Path) -> std::path::PathBuf {
    let mut name = matrix.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    matrix.with_file_name(name)
}
