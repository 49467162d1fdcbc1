//! Grammar-service client and binary rule features.
//!
//! Requests follow the LanguageTool HTTP API: `POST <endpoint>/v2/check`
//! with form fields `text` and `language`. Raw response bytes are cached on
//! disk under the SHA-256 of the request text, so a populated cache makes
//! the whole pipeline run offline.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const LANGUAGE: &str = "en-US";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarMatch {
    pub rule_id: String,
    pub offset: usize,
    pub length: usize,
}

#[derive(Deserialize)]
struct Response {
    matches: Vec<RawMatch>,
}

#[derive(Deserialize)]
struct RawMatch {
    offset: usize,
    length: usize,
    rule: RawRule,
}

#[derive(Deserialize)]
struct RawRule {
    id: String,
}

pub fn parse_response(bytes: &[u8]) -> Result<Vec<GrammarMatch>> {
    let r: Response = serde_json::from_slice(bytes)
        .map_err(|e| Error::Protocol(format!("unexpected grammar response: {e}")))?;
    Ok(r.matches
        .into_iter()
        .map(|m| GrammarMatch {
            rule_id: m.rule.id,
            offset: m.offset,
            length: m.length,
        })
        .collect())
}

/// One HTTP exchange. Errors are plain messages; the client owns retries.
pub trait Transport: Send + Sync {
    fn check(&self, endpoint: &str, text: &str) -> std::result::Result<Vec<u8>, String>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn check(&self, endpoint: &str, text: &str) -> std::result::Result<Vec<u8>, String> {
        let url = format!("{}/v2/check", endpoint.trim_end_matches('/'));
        let resp = self
            .client
            .post(url)
            .form(&[("text", text), ("language", LANGUAGE)])
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        resp.bytes().map(|b| b.to_vec()).map_err(|e| e.to_string())
    }
}

pub fn cache_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// One file per request, `<dir>/<sha256>.json`, holding the raw response.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<Vec<u8>>> {
        let p = self.path_for(key);
        match fs::read(&p) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(p.display().to_string(), e)),
        }
    }

    /// Written to a temporary name and renamed, so readers never see a
    /// partial file.
    pub fn put(&self, key: &str, bytes: &[u8]) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(self.dir.display().to_string(), e))?;
        let tmp = self.dir.join(format!(".{key}.tmp"));
        fs::write(&tmp, bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        let dst = self.path_for(key);
        fs::rename(&tmp, &dst).map_err(|e| Error::io(dst.display().to_string(), e))
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub endpoint: String,
    pub offline: bool,
    pub retries: usize,
    pub backoff: Duration,
    pub max_in_flight: usize,
    /// Minimum spacing between network requests; zero disables throttling.
    pub min_interval: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: "http://localhost:8081".into(),
            offline: false,
            retries: DEFAULT_RETRIES,
            backoff: Duration::from_millis(250),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            min_interval: Duration::ZERO,
        }
    }
}

const KEY_STRIPES: usize = 64;

pub struct GrammarClient {
    config: ClientConfig,
    transport: Box<dyn Transport>,
    cache: Option<ResponseCache>,
    next_slot: Mutex<Instant>,
    key_locks: Vec<Mutex<()>>,
}

impl GrammarClient {
    pub fn new(config: ClientConfig, transport: Box<dyn Transport>, cache: Option<ResponseCache>) -> Self {
        GrammarClient {
            config,
            transport,
            cache,
            next_slot: Mutex::new(Instant::now()),
            key_locks: (0..KEY_STRIPES).map(|_| Mutex::new(())).collect(),
        }
    }

    pub fn http(config: ClientConfig, cache: Option<ResponseCache>) -> Result<Self> {
        let transport = HttpTransport::new(Duration::from_secs(60))?;
        Ok(Self::new(config, Box::new(transport), cache))
    }

    fn lock_key(&self, key: &str) -> MutexGuard<'_, ()> {
        let stripe = usize::from_str_radix(&key[..4], 16).unwrap_or(0) % KEY_STRIPES;
        self.key_locks[stripe].lock().unwrap_or_else(|e| e.into_inner())
    }

    fn throttle(&self) {
        if self.config.min_interval.is_zero() {
            return;
        }
        let wait = {
            let mut slot = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let start = (*slot).max(now);
            *slot = start + self.config.min_interval;
            start - now
        };
        thread::sleep(wait);
    }

    fn fetch(&self, text: &str) -> Result<Vec<u8>> {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(self.config.backoff * (1 << (attempt - 1)));
            }
            self.throttle();
            match self.transport.check(&self.config.endpoint, text) {
                Ok(b) => return Ok(b),
                Err(e) => {
                    log::warn!("grammar request failed (attempt {}): {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(Error::Transport {
            attempts: self.config.retries + 1,
            message: last,
        })
    }

    /// Raw response for `text`, from the cache when possible.
    pub fn response(&self, text: &str) -> Result<Vec<u8>> {
        let key = cache_key(text);
        let _guard = self.lock_key(&key);
        if let Some(cache) = &self.cache {
            if let Some(b) = cache.get(&key)? {
                return Ok(b);
            }
        }
        if self.config.offline {
            return Err(Error::CacheMiss { key });
        }
        let bytes = self.fetch(text)?;
        // validate before caching so a bad payload is never persisted
        parse_response(&bytes)?;
        if let Some(cache) = &self.cache {
            cache.put(&key, &bytes)?;
        }
        Ok(bytes)
    }

    /// Matches for one chunk, its sentences joined by newlines.
    pub fn check_text<S: AsRef<str>>(&self, sentences: &[S]) -> Result<Vec<GrammarMatch>> {
        let text = join_sentences(sentences);
        if text.is_empty() {
            return Ok(Vec::new());
        }
        parse_response(&self.response(&text)?)
    }

    /// Checks many chunks with at most `max_in_flight` concurrent requests.
    pub fn check_many<S: AsRef<str> + Sync>(&self, chunks: &[Vec<S>]) -> Result<Vec<Vec<GrammarMatch>>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.max_in_flight.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| chunks.par_iter().map(|c| self.check_text(c)).collect())
    }
}

pub fn join_sentences<S: AsRef<str>>(sentences: &[S]) -> String {
    sentences
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Distinct rule ids among the matches.
pub fn rule_set(matches: &[GrammarMatch]) -> BTreeSet<String> {
    matches.iter().map(|m| m.rule_id.clone()).collect()
}

/// Rule ids of matches lying wholly inside the first `prefix_len` UTF-16
/// units of the checked text (the service reports offsets in those units).
pub fn rules_within(matches: &[GrammarMatch], prefix_len: usize) -> BTreeSet<String> {
    matches
        .iter()
        .filter(|m| m.offset + m.length <= prefix_len)
        .map(|m| m.rule_id.clone())
        .collect()
}

pub fn utf16_len(s: &str) -> usize {
    s.encode_utf16().count()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarVocabulary {
    pub rule_ids: Vec<String>,
}

impl GrammarVocabulary {
    pub fn new<I: IntoIterator<Item = String>>(ids: I) -> Self {
        let set: BTreeSet<String> = ids.into_iter().collect();
        GrammarVocabulary {
            rule_ids: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rule_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule_ids.is_empty()
    }

    pub fn position(&self, rule: &str) -> Option<usize> {
        self.rule_ids.binary_search_by(|r| r.as_str().cmp(rule)).ok()
    }
}

/// Union of the rule ids found in the training chunks.
pub fn fit_grammar_vocab<'a>(train_rules: impl IntoIterator<Item = &'a BTreeSet<String>>) -> GrammarVocabulary {
    GrammarVocabulary::new(train_rules.into_iter().flatten().cloned())
}

/// 1.0 where the rule fired in the chunk, else 0.0; unknown rules ignored.
pub fn grammar_features(rules: &BTreeSet<String>, vocab: &GrammarVocabulary) -> Vec<f64> {
    let mut v = vec![0.0; vocab.len()];
    for r in rules {
        if let Some(i) = vocab.position(r) {
            v[i] = 1.0;
        }
    }
    v
}
