//! Run configuration: one JSON file, then the environment, then flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nli_core::classifier::TrainConfig;
use nli_core::corpus::PrepareConfig;
use nli_core::evalkit::{DEFAULT_FOLDS, DEFAULT_HOLDOUT, LENGTH_PERCENTS};
use nli_core::grammar::{ClientConfig, DEFAULT_MAX_IN_FLIGHT, DEFAULT_RETRIES};
use nli_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ENDPOINT_ENV: &str = "NLI_GRAMMAR_ENDPOINT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    pub path: PathBuf,
    /// Extraction time reported in the DUR column, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_hours: Option<f64>,
}

/// Paths as written in the file; relative ones resolve against the file's
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub tagged_corpus: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_words: Option<PathBuf>,
    #[serde(default)]
    pub embeddings: BTreeMap<String, EmbeddingSource>,
    /// Per embedding model, records keyed `<chunk_id>@<percent>` for the
    /// length analysis.
    #[serde(default)]
    pub slice_embeddings: BTreeMap<String, PathBuf>,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub folds: u64,
    pub holdout: u64,
    pub tagger: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            folds: 23,
            holdout: 29,
            tagger: 31,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrammarSettings {
    pub endpoint: String,
    #[serde(default)]
    pub offline: bool,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Zero means unthrottled.
    #[serde(default)]
    pub requests_per_second: f64,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

fn default_retries() -> usize {
    DEFAULT_RETRIES
}

impl Default for GrammarSettings {
    fn default() -> Self {
        GrammarSettings {
            endpoint: ClientConfig::default().endpoint,
            offline: false,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            requests_per_second: 0.0,
            retries: DEFAULT_RETRIES,
        }
    }
}

impl GrammarSettings {
    pub fn client_config(&self) -> ClientConfig {
        let min_interval = if self.requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / self.requests_per_second)
        } else {
            Duration::ZERO
        };
        ClientConfig {
            endpoint: self.endpoint.clone(),
            offline: self.offline,
            retries: self.retries,
            max_in_flight: self.max_in_flight,
            min_interval,
            ..ClientConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Linguistic,
    Embeddings,
    Both,
}

impl FeatureSet {
    pub fn linguistic(self) -> bool {
        matches!(self, FeatureSet::Linguistic | FeatureSet::Both)
    }

    pub fn embeddings(self) -> bool {
        matches!(self, FeatureSet::Embeddings | FeatureSet::Both)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evaluation {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_holdout")]
    pub holdout: usize,
    #[serde(default = "default_percents")]
    pub percents: Vec<u32>,
    /// Refit the linguistic vocabularies inside every fold.
    #[serde(default)]
    pub strict_refit: bool,
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_holdout() -> usize {
    DEFAULT_HOLDOUT
}

fn default_percents() -> Vec<u32> {
    LENGTH_PERCENTS.to_vec()
}

impl Default for Evaluation {
    fn default() -> Self {
        Evaluation {
            folds: DEFAULT_FOLDS,
            holdout: DEFAULT_HOLDOUT,
            percents: default_percents(),
            strict_refit: false,
        }
    }
}

fn default_tagger_epochs() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub sampling: PrepareConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub classifier: TrainConfig,
    #[serde(default)]
    pub grammar: GrammarSettings,
    #[serde(default = "default_feature_set")]
    pub feature_set: FeatureSet,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default = "default_tagger_epochs")]
    pub tagger_epochs: usize,
}

fn default_feature_set() -> FeatureSet {
    FeatureSet::Both
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub grammar_endpoint: Option<String>,
    pub offline: bool,
    pub feature_set: Option<FeatureSet>,
    pub strict_refit: bool,
    pub holdout: Option<usize>,
}

/// A validated configuration plus the directory its relative paths hang off.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
    pub hash: String,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.out_dir)
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out_dir().join(stage)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.cache_dir)
    }
}

pub fn load(path: &Path, overrides: &Overrides, env_endpoint: Option<String>) -> Result<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if let Some(ep) = env_endpoint.filter(|s| !s.is_empty()) {
        config.grammar.endpoint = ep;
    }
    apply(&mut config, overrides);
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    let hash = config_hash(&config)?;
    let loaded = Loaded { config, base, hash };
    validate(&loaded)?;
    Ok(loaded)
}

fn apply(config: &mut RunConfig, o: &Overrides) {
    if let Some(d) = &o.out_dir {
        config.paths.out_dir = d.clone();
    }
    if let Some(ep) = &o.grammar_endpoint {
        config.grammar.endpoint = ep.clone();
    }
    if o.offline {
        config.grammar.offline = true;
    }
    if let Some(fs) = o.feature_set {
        config.feature_set = fs;
    }
    if o.strict_refit {
        config.evaluation.strict_refit = true;
    }
    if let Some(h) = o.holdout {
        config.evaluation.holdout = h;
    }
}

/// SHA-256 of the effective configuration's canonical JSON. The output
/// root is left out: it decides where artifacts go, not what they contain.
pub fn config_hash(config: &RunConfig) -> Result<String> {
    let mut c = config.clone();
    c.paths.out_dir = PathBuf::new();
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&c)?)))
}

fn validate(l: &Loaded) -> Result<()> {
    let c = &l.config;
    c.classifier.validate()?;
    c.sampling.non_europe.validate()?;
    c.sampling.europe.validate()?;
    if c.evaluation.folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {}", c.evaluation.folds)));
    }
    if c.evaluation.holdout == 0 {
        return Err(Error::Config("holdout must be positive".into()));
    }
    if let Some(p) = c.evaluation.percents.iter().find(|&&p| p == 0 || p > 100) {
        return Err(Error::Config(format!("slice percent {p} outside 1..=100")));
    }
    if c.tagger_epochs == 0 {
        return Err(Error::Config("tagger_epochs must be positive".into()));
    }
    if c.grammar.max_in_flight == 0 {
        return Err(Error::Config("grammar.max_in_flight must be positive".into()));
    }
    if !(c.grammar.requests_per_second >= 0.0 && c.grammar.requests_per_second.is_finite()) {
        return Err(Error::Config("grammar.requests_per_second must be a finite value >= 0".into()));
    }
    if let Some(name) = c.paths.embeddings.keys().find(|n| n.as_str() == LINGUISTIC_MODEL) {
        return Err(Error::Config(format!("embedding model name `{name}` is reserved")));
    }
    for name in c.paths.slice_embeddings.keys() {
        if !c.paths.embeddings.contains_key(name) {
            return Err(Error::Config(format!("slice embeddings for unknown model `{name}`")));
        }
    }
    let p = &c.paths;
    let mut inputs: Vec<&Path> = vec![&p.corpus, &p.tagged_corpus];
    inputs.extend(p.dictionary.as_deref());
    inputs.extend(p.function_words.as_deref());
    inputs.extend(p.embeddings.values().map(|e| e.path.as_path()));
    inputs.extend(p.slice_embeddings.values().map(PathBuf::as_path));
    for i in inputs {
        let r = l.resolve(i);
        if !r.exists() {
            return Err(Error::Config(format!("input path {} does not exist", r.display())));
        }
    }
    Ok(())
}

/// Model name of the linguistic feature pipeline in reports.
pub const LINGUISTIC_MODEL: &str = "linguistic";
