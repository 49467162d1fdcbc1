//! Resource files compiled into the library.

/// English word frequencies, `word<TAB>count`.
pub const DICTIONARY_EN: &str = include_str!("../resources/dictionary_en.tsv");

/// Closed-class English words, one per line.
pub const FUNCTION_WORDS: &str = include_str!("../resources/function_words.txt");
