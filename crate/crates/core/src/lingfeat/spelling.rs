//! Dictionary spelling correction through a symmetric-delete index.
//!
//! Every dictionary word is indexed under all strings reachable from it by
//! deleting up to `max_distance` characters. A query generates its own
//! deletes, collects the words sharing any key, and verifies each with the
//! restricted Damerau–Levenshtein (optimal string alignment) distance. Any
//! pair within distance `k` shares a common `k`-delete, so the candidate set
//! is complete and the result matches a full dictionary scan.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::sync::RwLock;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const MAX_LOOKUP_DISTANCE: usize = 2;

/// Restricted Damerau–Levenshtein distance: insert, delete, replace and
/// adjacent transposition, no substring edited twice.
pub fn osa_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    osa_chars(&a, &b)
}

fn osa_chars(a: &[char], b: &[char]) -> usize {
    let (m, n) = (a.len(), b.len());
    let w = n + 1;
    let mut d = vec![0usize; (m + 1) * w];
    for i in 0..=m {
        d[i * w] = i;
    }
    for j in 0..=n {
        d[j] = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut v = (d[(i - 1) * w + j] + 1)
                .min(d[i * w + j - 1] + 1)
                .min(d[(i - 1) * w + j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                v = v.min(d[(i - 2) * w + j - 2] + 1);
            }
            d[i * w + j] = v;
        }
    }
    d[m * w + n]
}

/// Word → corpus frequency table.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    words: Vec<String>,
    freqs: Vec<u64>,
    lookup: HashMap<String, u32>,
}

impl Dictionary {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut dict = Dictionary::default();
        for (w, f) in pairs {
            let w = w.into().to_lowercase();
            match dict.lookup.get(&w) {
                Some(&i) => dict.freqs[i as usize] += f,
                None => {
                    dict.lookup.insert(w.clone(), dict.words.len() as u32);
                    dict.words.push(w);
                    dict.freqs.push(f);
                }
            }
        }
        dict
    }

    /// Reads `word<TAB>frequency` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut text = String::new();
        BufReader::new(file)
            .read_to_string(&mut text)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text, path)
    }

    /// Parses `word<TAB>frequency` lines; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let (word, freq) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected word<TAB>frequency".into()))?;
            let freq: u64 = freq
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad frequency: {e}")))?;
            pairs.push((word.trim().to_string(), freq));
        }
        Ok(Self::from_pairs(pairs))
    }

    /// The bundled English frequency list.
    pub fn bundled() -> Self {
        Self::parse(crate::resources::DICTIONARY_EN, Path::new("<bundled dictionary>"))
            .expect("bundled dictionary parses")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup.contains_key(word)
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.lookup.get(word).map(|&i| self.freqs[i as usize])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words.iter().map(String::as_str).zip(self.freqs.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suggestion {
    pub term: String,
    pub distance: usize,
    pub frequency: u64,
}

impl Suggestion {
    /// Smaller distance, then higher frequency, then lexicographic.
    pub fn better_than(&self, other: &Suggestion) -> bool {
        (self.distance, std::cmp::Reverse(self.frequency), &self.term)
            < (other.distance, std::cmp::Reverse(other.frequency), &other.term)
    }
}

fn key_hash(chars: &[char]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &c in chars {
        h ^= u64::from(u32::from(c));
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// All strings reachable by deleting up to `depth` characters, as hashes.
fn delete_keys(word: &[char], depth: usize) -> HashSet<u64> {
    let mut keys = HashSet::new();
    let mut frontier: HashSet<Vec<char>> = HashSet::from([word.to_vec()]);
    keys.insert(key_hash(word));
    for _ in 0..depth {
        let mut next = HashSet::new();
        for w in &frontier {
            for i in 0..w.len() {
                let mut d = w.clone();
                d.remove(i);
                keys.insert(key_hash(&d));
                next.insert(d);
            }
        }
        frontier = next;
    }
    keys
}

pub struct SpellChecker {
    dict: Dictionary,
    max_distance: usize,
    // Hash collisions only widen the candidate set; every candidate is verified.
    deletes: HashMap<u64, Vec<u32>>,
    memo: RwLock<HashMap<String, Option<Suggestion>>>,
}

impl std::fmt::Debug for SpellChecker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpellChecker")
            .field("words", &self.dict.len())
            .field("max_distance", &self.max_distance)
            .field("keys", &self.deletes.len())
            .finish()
    }
}

impl SpellChecker {
    pub fn new(dict: Dictionary) -> Self {
        Self::with_max_distance(dict, MAX_LOOKUP_DISTANCE)
    }

    pub fn with_max_distance(dict: Dictionary, max_distance: usize) -> Self {
        let partial: Vec<(u64, u32)> = dict
            .words
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, w)| {
                let chars: Vec<char> = w.chars().collect();
                delete_keys(&chars, max_distance)
                    .into_iter()
                    .map(move |k| (k, i as u32))
            })
            .collect();
        let mut deletes: HashMap<u64, Vec<u32>> = HashMap::new();
        for (k, i) in partial {
            deletes.entry(k).or_default().push(i);
        }
        SpellChecker {
            dict,
            max_distance,
            deletes,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    /// `None` when the word is in the dictionary or nothing lies within the
    /// maximum distance.
    pub fn correct(&self, word: &str) -> Option<Suggestion> {
        if self.dict.contains(word) {
            return None;
        }
        if let Some(hit) = self.memo.read().unwrap().get(word) {
            return hit.clone();
        }
        let result = self.lookup(word);
        self.memo
            .write()
            .unwrap()
            .insert(word.to_string(), result.clone());
        result
    }

    fn lookup(&self, word: &str) -> Option<Suggestion> {
        let q: Vec<char> = word.chars().collect();
        let mut seen = HashSet::new();
        let mut best: Option<Suggestion> = None;
        for key in delete_keys(&q, self.max_distance) {
            let Some(ids) = self.deletes.get(&key) else {
                continue;
            };
            for &id in ids {
                if !seen.insert(id) {
                    continue;
                }
                let term = &self.dict.words[id as usize];
                let len = term.chars().count();
                if len.abs_diff(q.len()) > self.max_distance {
                    continue;
                }
                let t: Vec<char> = term.chars().collect();
                let distance = osa_chars(&q, &t);
                if distance > self.max_distance {
                    continue;
                }
                let cand = Suggestion {
                    term: term.clone(),
                    distance,
                    frequency: self.dict.freqs[id as usize],
                };
                if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                    best = Some(cand);
                }
            }
        }
        best
    }
}

/// Convenience wrapper: builds a one-off index and corrects a single word.
pub fn spell_correct(word: &str, dictionary: &Dictionary) -> Option<(String, usize)> {
    SpellChecker::new(dictionary.clone())
        .correct(word)
        .map(|s| (s.term, s.distance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict() -> Dictionary {
        Dictionary::from_pairs([("the", 100), ("then", 50)])
    }

    #[test]
    fn osa_basics() {
        assert_eq!(osa_distance("teh", "the"), 1);
        assert_eq!(osa_distance("ca", "abc"), 3);
        assert_eq!(osa_distance("", "abc"), 3);
        assert_eq!(osa_distance("kitten", "sitting"), 3);
    }

    #[test]
    fn corrects_transposition() {
        assert_eq!(spell_correct("teh", &dict()), Some(("the".into(), 1)));
    }

    #[test]
    fn known_word_is_not_misspelled() {
        assert_eq!(spell_correct("the", &dict()), None);
    }

    #[test]
    fn far_word_has_no_correction() {
        assert_eq!(spell_correct("zzzzzz", &dict()), None);
    }

    #[test]
    fn frequency_breaks_distance_ties() {
        let d = Dictionary::from_pairs([("cat", 5), ("car", 9), ("cab", 9)]);
        // all at distance 1 from "caz"; car and cab tie on frequency
        assert_eq!(spell_correct("caz", &d), Some(("cab".into(), 1)));
    }

    #[test]
    fn memo_returns_same_answer() {
        let s = SpellChecker::new(dict());
        assert_eq!(s.correct("thn"), s.correct("thn"));
        assert_eq!(s.correct("thn").unwrap().term, "the");
    }

    #[test]
    fn loads_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tsv");
        std::fs::write(&p, "the\t10\nCat\t3\n").unwrap();
        let d = Dictionary::load(&p).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.frequency("cat"), Some(3));
        std::fs::write(&p, "the 10\n").unwrap();
        assert!(matches!(Dictionary::load(&p), Err(Error::Parse { line: 1, .. })));
    }
}
