//! Part-of-speech trigram features.

use rayon::prelude::*;

use super::ngram::{count_parallel, rank_top_k};
use crate::postag::TaggerModel;
use crate::text::tagger_tokens;

pub const POS_TOP_K: usize = 300;

/// Tag sequence of each sentence.
pub fn tag_sentences<S: AsRef<str> + Sync>(sentences: &[S], tagger: &TaggerModel) -> Vec<Vec<String>> {
    sentences
        .par_iter()
        .map(|s| tagger.tag(&tagger_tokens(s.as_ref())))
        .collect()
}

/// Windows of three tags joined by a space; no window crosses a sentence.
pub fn tag_trigrams(tags: &[String]) -> impl Iterator<Item = String> + '_ {
    tags.windows(3).map(|w| w.join(" "))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PosVocabulary {
    pub entries: Vec<(String, u64)>,
}

impl PosVocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn index(&self) -> std::collections::HashMap<&str, usize> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (g, _))| (g.as_str(), i))
            .collect()
    }
}

/// Fits over already-tagged training chunks (each a list of sentence tag
/// sequences).
pub fn fit_pos_vocab(tagged_chunks: &[Vec<Vec<String>>], top_k: usize) -> PosVocabulary {
    let counts = count_parallel(tagged_chunks, |chunk| {
        chunk.iter().flat_map(|t| tag_trigrams(t)).collect::<Vec<_>>()
    });
    PosVocabulary {
        entries: rank_top_k(counts, top_k),
    }
}

pub fn pos_trigram_counts(tagged_chunk: &[Vec<String>], vocab: &PosVocabulary) -> Vec<u64> {
    let index = vocab.index();
    let mut counts = vec![0; vocab.len()];
    for tags in tagged_chunk {
        for g in tag_trigrams(tags) {
            if let Some(&i) = index.get(g.as_str()) {
                counts[i] += 1;
            }
        }
    }
    counts
}
