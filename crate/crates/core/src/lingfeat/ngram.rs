use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::text::{char_trigrams, word_tokens};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgramKind {
    WordUnigram,
    CharTrigram,
}

impl NgramKind {
    pub fn extract(self, text: &str) -> Vec<String> {
        match self {
            NgramKind::WordUnigram => word_tokens(text),
            NgramKind::CharTrigram => char_trigrams(text),
        }
    }
}

/// Keeps the `k` most frequent keys: count descending, ties by key ascending.
pub fn rank_top_k<K: Ord + Clone>(counts: impl IntoIterator<Item = (K, u64)>, k: usize) -> Vec<(K, u64)> {
    let mut all: Vec<(K, u64)> = counts.into_iter().collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Associative, commutative merge for partial count maps.
pub fn merge_counts<K: Eq + Hash>(mut a: HashMap<K, u64>, b: HashMap<K, u64>) -> HashMap<K, u64> {
    if a.len() < b.len() {
        return merge_counts(b, a);
    }
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

/// Counts every item produced by `extract` over all documents, in parallel.
pub fn count_parallel<D, K, F, I>(docs: &[D], extract: F) -> HashMap<K, u64>
where
    D: Sync,
    K: Eq + Hash + Send,
    F: Fn(&D) -> I + Sync,
    I: IntoIterator<Item = K>,
{
    docs.par_iter()
        .fold(HashMap::new, |mut acc, d| {
            for k in extract(d) {
                *acc.entry(k).or_insert(0) += 1;
            }
            acc
        })
        .reduce(HashMap::new, merge_counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct NgramVocabulary {
    pub kind: NgramKind,
    pub entries: Vec<(String, u64)>,
    index: HashMap<String, usize>,
}

#[derive(Clone, Serialize, Deserialize)]
struct VocabRepr {
    kind: NgramKind,
    entries: Vec<(String, u64)>,
}

impl From<VocabRepr> for NgramVocabulary {
    fn from(r: VocabRepr) -> Self {
        NgramVocabulary::from_entries(r.kind, r.entries)
    }
}

impl From<NgramVocabulary> for VocabRepr {
    fn from(v: NgramVocabulary) -> Self {
        VocabRepr {
            kind: v.kind,
            entries: v.entries,
        }
    }
}

impl NgramVocabulary {
    pub fn from_entries(kind: NgramKind, entries: Vec<(String, u64)>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (g, _))| (g.clone(), i))
            .collect();
        NgramVocabulary {
            kind,
            entries,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, gram: &str) -> Option<usize> {
        self.index.get(gram).copied()
    }

    pub fn grams(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(g, _)| g.as_str())
    }
}

pub fn fit_ngram_vocab<S: AsRef<str> + Sync>(train_texts: &[S], kind: NgramKind, top_k: usize) -> NgramVocabulary {
    let counts = count_parallel(train_texts, |t| kind.extract(t.as_ref()));
    NgramVocabulary::from_entries(kind, rank_top_k(counts, top_k))
}

/// Raw counts in vocabulary order; out-of-vocabulary grams are ignored.
pub fn ngram_counts(text: &str, vocab: &NgramVocabulary) -> Vec<u64> {
    let mut counts = vec![0; vocab.len()];
    for g in vocab.kind.extract(text) {
        if let Some(i) = vocab.position(&g) {
            counts[i] += 1;
        }
    }
    counts
}
