//! Function-word frequencies and average sentence length.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::{function_word_tokens, length_tokens};

pub const FUNCTION_WORD_COUNT: usize = 467;

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionWords {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl FunctionWords {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.len() != FUNCTION_WORD_COUNT {
            return Err(Error::Config(format!(
                "function-word list has {} entries, expected {FUNCTION_WORD_COUNT}",
                words.len()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.to_lowercase(), i).is_some() {
                return Err(Error::Config(format!("function word `{w}` listed twice")));
            }
        }
        Ok(FunctionWords { words, index })
    }

    /// One word per line; blank lines are not counted.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    /// The bundled 467-word list.
    pub fn bundled() -> Self {
        Self::parse(crate::resources::FUNCTION_WORDS).expect("bundled list is valid")
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn function_word_counts(text: &str, list: &FunctionWords) -> Vec<u64> {
    let mut counts = vec![0; list.len()];
    for t in function_word_tokens(text) {
        if let Some(&i) = list.index.get(&t) {
            counts[i] += 1;
        }
    }
    counts
}

/// Surviving tokens per sentence, averaged over the sentences of the chunk.
pub fn avg_sentence_length<S: AsRef<str>>(sentences: &[S]) -> f64 {
    if sentences.is_empty() {
        return 0.0;
    }
    let tokens: usize = sentences
        .iter()
        .map(|s| length_tokens(s.as_ref()).count())
        .sum();
    tokens as f64 / sentences.len() as f64
}
