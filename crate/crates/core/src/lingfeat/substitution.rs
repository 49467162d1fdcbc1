//! Spelling-error substitution counts and average edit distance.

use serde::{Deserialize, Serialize};

use super::edit::{edit_ops, SubstOp};
use super::ngram::{count_parallel, rank_top_k};
use super::spelling::SpellChecker;
use crate::text::word_tokens;

pub const SUBSTITUTION_TOP_K: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionVocabulary {
    pub entries: Vec<(SubstOp, u64)>,
}

impl SubstitutionVocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, op: &SubstOp) -> Option<usize> {
        self.entries.iter().position(|(o, _)| o == op)
    }
}

/// A misspelled token with its correction and plain-Levenshtein script.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedToken {
    pub levenshtein: usize,
    pub ops: Vec<SubstOp>,
}

/// Only purely alphabetic tokens are spell-checked; all word tokens count
/// towards the denominator of the average edit distance.
fn checkable(token: &str) -> bool {
    token.chars().all(char::is_alphabetic)
}

/// Word tokens of `text` with the corrections found for the misspelled ones.
pub fn corrections(text: &str, speller: &SpellChecker) -> (usize, Vec<CorrectedToken>) {
    let tokens = word_tokens(text);
    let fixed = tokens
        .iter()
        .filter(|t| checkable(t))
        .filter_map(|t| {
            speller.correct(t).map(|s| {
                let script = edit_ops(t, &s.term);
                CorrectedToken {
                    levenshtein: script.distance,
                    ops: script.subst_ops().collect(),
                }
            })
        })
        .collect();
    (tokens.len(), fixed)
}

pub fn fit_substitution_vocab<S: AsRef<str> + Sync>(
    train_texts: &[S],
    speller: &SpellChecker,
    top_k: usize,
) -> SubstitutionVocabulary {
    let counts = count_parallel(train_texts, |t| {
        corrections(t.as_ref(), speller)
            .1
            .into_iter()
            .flat_map(|c| c.ops)
            .collect::<Vec<_>>()
    });
    SubstitutionVocabulary {
        entries: rank_top_k(counts, top_k),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutionFeatures {
    pub counts: Vec<u64>,
    pub avg_edit_distance: f64,
}

pub fn substitution_features(
    text: &str,
    speller: &SpellChecker,
    vocab: &SubstitutionVocabulary,
) -> SubstitutionFeatures {
    let (n_words, fixed) = corrections(text, speller);
    let mut counts = vec![0; vocab.len()];
    let mut total = 0usize;
    for c in &fixed {
        total += c.levenshtein;
        for op in &c.ops {
            if let Some(i) = vocab.position(op) {
                counts[i] += 1;
            }
        }
    }
    let avg_edit_distance = if n_words == 0 {
        0.0
    } else {
        total as f64 / n_words as f64
    };
    SubstitutionFeatures {
        counts,
        avg_edit_distance,
    }
}
