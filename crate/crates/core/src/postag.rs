//! Greedy averaged-perceptron part-of-speech tagger.
//!
//! Left-to-right tagging with the previous two predicted tags as context.
//! Training runs the usual mistake-driven perceptron update; the returned
//! weights are the average of the weights in force at every training step.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

const START: [&str; 2] = ["-START-", "-START2-"];
const END: [&str; 2] = ["-END-", "-END2-"];
const SINGLE_TAG_MIN_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// Reads `token<TAB>tag` lines with a blank line between sentences.
pub fn load_tagged_corpus(path: &Path) -> Result<Vec<TaggedSentence>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    let mut cur = TaggedSentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            if !cur.tokens.is_empty() {
                out.push(std::mem::replace(
                    &mut cur,
                    TaggedSentence {
                        tokens: Vec::new(),
                        tags: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let (tok, tag) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected token<TAB>tag".into(),
        })?;
        cur.tokens.push(tok.to_string());
        cur.tags.push(tag.trim().to_string());
    }
    if !cur.tokens.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn feature_strings(i: usize, tokens: &[String], prev: &str, prev2: &str) -> Vec<String> {
    let word = &tokens[i];
    let lower = word.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let suffix = |k: usize| -> String { chars[chars.len().saturating_sub(k)..].iter().collect() };
    let context = |j: isize| -> String {
        if j < 0 {
            START[(-j - 1) as usize].to_string()
        } else if j as usize >= tokens.len() {
            END[j as usize - tokens.len()].to_string()
        } else {
            tokens[j as usize].to_lowercase()
        }
    };
    let ii = i as isize;
    let mut f = vec![
        "bias".to_string(),
        format!("w {word}"),
        format!("lw {lower}"),
        format!("s1 {}", suffix(1)),
        format!("s2 {}", suffix(2)),
        format!("s3 {}", suffix(3)),
        format!("p1 {}", chars.first().map(|c| c.to_string()).unwrap_or_default()),
        format!("t-1 {prev}"),
        format!("t-2 {prev2} {prev}"),
        format!("w-1 {}", context(ii - 1)),
        format!("w+1 {}", context(ii + 1)),
    ];
    if word.chars().any(|c| c.is_ascii_digit()) {
        f.push("has_digit".into());
    }
    if word.contains('-') {
        f.push("has_hyphen".into());
    }
    if word.chars().next().is_some_and(char::is_uppercase) {
        f.push("is_cap".into());
    }
    f
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Weight storage used during training. Implementations differ only in how
/// the final averaged weights are computed.
pub trait WeightStore {
    fn new(n_tags: usize) -> Self;
    fn scores(&self, features: &[String], out: &mut [f64]);
    /// Called once per scored token, before any update of that token.
    fn step(&mut self);
    fn update(&mut self, truth: usize, guess: usize, features: &[String]);
    fn averaged(self) -> HashMap<String, Vec<f64>>;
}

struct FeatureWeights {
    current: Vec<f64>,
    totals: Vec<f64>,
    stamps: Vec<u64>,
}

/// Lazy averaging: each weight carries its running total and the step of
/// its last change.
pub struct LazyAveraged {
    n_tags: usize,
    steps: u64,
    weights: HashMap<String, FeatureWeights>,
}

impl WeightStore for LazyAveraged {
    fn new(n_tags: usize) -> Self {
        LazyAveraged {
            n_tags,
            steps: 0,
            weights: HashMap::new(),
        }
    }

    fn scores(&self, features: &[String], out: &mut [f64]) {
        out.fill(0.0);
        for f in features {
            if let Some(w) = self.weights.get(f) {
                for (o, v) in out.iter_mut().zip(&w.current) {
                    *o += v;
                }
            }
        }
    }

    fn step(&mut self) {
        self.steps += 1;
    }

    fn update(&mut self, truth: usize, guess: usize, features: &[String]) {
        if truth == guess {
            return;
        }
        let now = self.steps;
        let n = self.n_tags;
        for f in features {
            let w = self
                .weights
                .entry(f.clone())
                .or_insert_with(|| FeatureWeights {
                    current: vec![0.0; n],
                    totals: vec![0.0; n],
                    stamps: vec![0; n],
                });
            for (tag, delta) in [(truth, 1.0), (guess, -1.0)] {
                w.totals[tag] += (now - w.stamps[tag]) as f64 * w.current[tag];
                w.stamps[tag] = now;
                w.current[tag] += delta;
            }
        }
    }

    fn averaged(self) -> HashMap<String, Vec<f64>> {
        let steps = self.steps;
        self.weights
            .into_iter()
            .map(|(f, w)| {
                let avg = (0..w.current.len())
                    .map(|t| {
                        if steps == 0 {
                            return 0.0;
                        }
                        let total = w.totals[t] + (steps - w.stamps[t]) as f64 * w.current[t];
                        total / steps as f64
                    })
                    .collect();
                (f, avg)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    tag_set: Vec<String>,
    weights: HashMap<String, Vec<f64>>,
    single_tag_words: BTreeMap<String, String>,
}

/// Stable on-disk form: every map sorted, zero weights dropped.
#[derive(Serialize, Deserialize)]
struct TaggerFile {
    tag_set: Vec<String>,
    single_tag_words: BTreeMap<String, String>,
    weights: BTreeMap<String, BTreeMap<String, f64>>,
}

fn single_tag_words(corpus: &[TaggedSentence]) -> BTreeMap<String, String> {
    let mut counts: HashMap<&str, BTreeMap<&str, usize>> = HashMap::new();
    for s in corpus {
        for (w, t) in s.tokens.iter().zip(&s.tags) {
            *counts.entry(w).or_default().entry(t).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .filter_map(|(w, tags)| {
            if tags.len() != 1 {
                return None;
            }
            let (tag, n) = tags.into_iter().next().unwrap();
            (n >= SINGLE_TAG_MIN_COUNT).then(|| (w.to_string(), tag.to_string()))
        })
        .collect()
}

pub fn train_tagger(corpus: &[TaggedSentence], epochs: usize, seed: u64) -> Result<TaggerModel> {
    train_with::<LazyAveraged>(corpus, epochs, seed)
}

/// Training loop, generic over the weight store.
pub fn train_with<S: WeightStore>(
    corpus: &[TaggedSentence],
    epochs: usize,
    seed: u64,
) -> Result<TaggerModel> {
    if corpus.is_empty() {
        return Err(Error::Validation("tagged corpus is empty".into()));
    }
    if epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if let Some(s) = corpus.iter().find(|s| s.tokens.len() != s.tags.len()) {
        return Err(Error::Validation(format!(
            "sentence with {} tokens has {} tags",
            s.tokens.len(),
            s.tags.len()
        )));
    }
    let tag_set: Vec<String> = corpus
        .iter()
        .flat_map(|s| s.tags.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let tag_index: HashMap<&str, usize> = tag_set
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let single = single_tag_words(corpus);

    let mut store = S::new(tag_set.len());
    let mut scores = vec![0.0; tag_set.len()];
    let mut rng = SeededRng::derived(seed, "tagger");
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for _ in 0..epochs {
        rng.shuffle(&mut order);
        for &si in &order {
            let sent = &corpus[si];
            let (mut prev, mut prev2) = (START[0].to_string(), START[1].to_string());
            for i in 0..sent.tokens.len() {
                let guess = match single.get(&sent.tokens[i]) {
                    Some(t) => t.clone(),
                    None => {
                        let feats = feature_strings(i, &sent.tokens, &prev, &prev2);
                        store.scores(&feats, &mut scores);
                        let g = argmax(&scores);
                        store.step();
                        store.update(tag_index[sent.tags[i].as_str()], g, &feats);
                        tag_set[g].clone()
                    }
                };
                prev2 = std::mem::replace(&mut prev, guess);
            }
        }
    }
    Ok(TaggerModel {
        tag_set,
        weights: store.averaged(),
        single_tag_words: single,
    })
}

impl TaggerModel {
    pub fn tag_set(&self) -> &[String] {
        &self.tag_set
    }

    pub fn single_tag_words(&self) -> &BTreeMap<String, String> {
        &self.single_tag_words
    }

    pub fn weight(&self, feature: &str, tag: &str) -> f64 {
        let Some(t) = self.tag_set.iter().position(|x| x == tag) else {
            return 0.0;
        };
        self.weights.get(feature).map_or(0.0, |w| w[t])
    }

    /// One tag per token. Equal scores resolve to the earliest tag in
    /// `tag_set` order.
    pub fn tag(&self, tokens: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut scores = vec![0.0; self.tag_set.len()];
        let (mut prev, mut prev2) = (START[0].to_string(), START[1].to_string());
        for i in 0..tokens.len() {
            let tag = match self.single_tag_words.get(&tokens[i]) {
                Some(t) => t.clone(),
                None => {
                    scores.fill(0.0);
                    for f in feature_strings(i, tokens, &prev, &prev2) {
                        if let Some(w) = self.weights.get(&f) {
                            for (s, v) in scores.iter_mut().zip(w) {
                                *s += v;
                            }
                        }
                    }
                    self.tag_set[argmax(&scores)].clone()
                }
            };
            out.push(tag.clone());
            prev2 = std::mem::replace(&mut prev, tag);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let weights = self
            .weights
            .iter()
            .filter_map(|(f, w)| {
                let m: BTreeMap<String, f64> = self
                    .tag_set
                    .iter()
                    .zip(w)
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(t, &v)| (t.clone(), v))
                    .collect();
                (!m.is_empty()).then(|| (f.clone(), m))
            })
            .collect();
        Ok(serde_json::to_string(&TaggerFile {
            tag_set: self.tag_set.clone(),
            single_tag_words: self.single_tag_words.clone(),
            weights,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TaggerFile = serde_json::from_str(text)?;
        if file.tag_set.is_empty() {
            return Err(Error::Validation("tagger has an empty tag set".into()));
        }
        let index: HashMap<&str, usize> = file
            .tag_set
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let mut weights = HashMap::with_capacity(file.weights.len());
        for (f, m) in file.weights {
            let mut w = vec![0.0; file.tag_set.len()];
            for (t, v) in m {
                let i = *index
                    .get(t.as_str())
                    .ok_or_else(|| Error::Validation(format!("unknown tag `{t}` in weights")))?;
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("non-finite weight for `{f}`")));
                }
                w[i] = v;
            }
            weights.insert(f, w);
        }
        Ok(TaggerModel {
            tag_set: file.tag_set,
            weights,
            single_tag_words: file.single_tag_words,
        })
    }
}
