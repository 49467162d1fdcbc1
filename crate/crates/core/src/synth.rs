//! Seeded synthetic data used by the test suite and the bundled fixtures.
//!
//! A small template grammar with Penn-style tags produces English-like
//! sentences. Five pseudo-languages bias that grammar with lexical
//! preferences, spelling habits and grammatical slips, so a classifier has
//! something real to find. The same grammar yields a tagged corpus for the
//! tagger, class-correlated embedding vectors, and LanguageTool-shaped
//! responses for grammar-cache fixtures.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::corpus::{AuthorRecord, Partition};
use crate::embedstore::{EmbeddingRecord, EMBEDDING_DIM};
use crate::postag::TaggedSentence;
use crate::rng::SeededRng;

pub const LANGUAGES: [&str; 5] = ["Aldic", "Borean", "Calvic", "Dunmeri", "Eskar"];

struct Lexicon {
    entries: BTreeMap<&'static str, Vec<&'static str>>,
}

fn lexicon() -> Lexicon {
    let mut e = BTreeMap::new();
    e.insert("DT", vec!["the", "this", "that", "every", "some", "no", "each", "the"]);
    e.insert(
        "JJ",
        vec![
            "big", "small", "old", "new", "quiet", "happy", "strange", "long", "short",
            "bright", "dark", "cold", "warm", "young", "heavy", "simple", "large", "little",
            "green", "busy", "famous", "careful", "empty", "light", "open", "early",
        ],
    );
    e.insert(
        "NN",
        vec![
            "dog", "house", "city", "river", "teacher", "book", "car", "garden", "window",
            "morning", "problem", "market", "friend", "question", "road", "table", "letter",
            "family", "story", "doctor", "light", "run", "watch", "idea", "apple", "office",
            "island", "answer", "evening", "school", "kitchen", "station",
        ],
    );
    e.insert(
        "NNS",
        vec![
            "dogs", "houses", "cities", "rivers", "teachers", "books", "cars", "gardens",
            "windows", "friends", "questions", "stories", "doctors", "walks", "apples",
            "ideas", "letters", "schools", "watches", "runs",
        ],
    );
    e.insert(
        "VB",
        vec![
            "like", "see", "want", "need", "find", "read", "build", "open", "watch", "walk",
            "run", "know", "make", "take", "keep", "visit", "help", "clean",
        ],
    );
    e.insert(
        "VBD",
        vec![
            "liked", "saw", "wanted", "needed", "found", "built", "opened", "watched",
            "walked", "knew", "made", "took", "kept", "visited", "helped", "cleaned",
        ],
    );
    e.insert("PRP3", vec!["he", "she", "it"]);
    e.insert("PRPPL", vec!["I", "you", "we", "they"]);
    e.insert(
        "IN",
        vec![
            "in", "on", "near", "under", "behind", "with", "from", "into", "after", "before",
            "across", "about",
        ],
    );
    e.insert(
        "RB",
        vec![
            "quietly", "quickly", "slowly", "often", "never", "always", "really", "today",
            "here", "there", "actually", "perhaps", "together", "again",
        ],
    );
    e.insert("MD", vec!["can", "will", "should", "must", "could", "might"]);
    e.insert("CC", vec!["and", "but", "or"]);
    e.insert(
        "NNP",
        vec!["London", "Paris", "Maria", "John", "Berlin", "Anna", "Tokyo", "Peter"],
    );
    e.insert("WRB", vec!["why", "when", "where", "how"]);
    Lexicon { entries: e }
}

/// Third-person singular form of a base verb.
fn vbz(base: &str) -> String {
    match base {
        "watch" => "watches".into(),
        _ => format!("{base}s"),
    }
}

// Slot names: a Penn tag, or PRP3/PRPPL/VBZ/VBP which expand to PRP or verb
// forms with the right agreement.
const TEMPLATES: &[&[&str]] = &[
    &["DT", "JJ", "NN", "VBZ", "DT", "NN", "."],
    &["PRP3", "VBZ", "DT", "JJ", "NNS", "."],
    &["PRPPL", "VBP", "DT", "NN", "IN", "DT", "NN", "."],
    &["PRPPL", "VBD", "IN", "DT", "NN", "."],
    &["DT", "NNS", "VBP", "RB", "."],
    &["PRP3", "MD", "VB", "DT", "JJ", "NN", "."],
    &["NNP", "VBZ", "IN", "NNP", "CC", "PRP3", "VBZ", "NNS", "."],
    &["IN", "DT", "NN", ",", "PRPPL", "VBD", "DT", "NN", "."],
    &["WRB", "MD", "PRPPL", "VB", "DT", "NN", "?"],
    &["PRPPL", "VBP", "TO", "VB", "DT", "NNS", "RB", "."],
    &["DT", "NN", "IN", "DT", "NN", "VBD", "DT", "JJ", "NN", "."],
    &["PRP3", "VBZ", "DT", "NN", "RB", "."],
];

#[derive(Debug, Clone, Copy, Default)]
struct Tics {
    /// Index offset of the favoured lexical items.
    favourite: usize,
    favourite_rate: f64,
    spelling_rate: f64,
    spelling_kind: usize,
    drop_article: f64,
    drop_third_person_s: f64,
    a_before_vowel: f64,
    repeat_word: f64,
    space_before_comma: f64,
    opener: Option<&'static str>,
    opener_rate: f64,
}

/// Habits of one pseudo-language; `strength` scales every rate, 1.0 being
/// blatant.
fn tics_for(language: usize, strength: f64) -> Tics {
    let base = Tics {
        favourite: language,
        favourite_rate: 0.5 * strength,
        spelling_rate: 0.06 * strength,
        spelling_kind: language,
        ..Tics::default()
    };
    match language {
        0 => Tics {
            opener: Some("actually"),
            opener_rate: 0.25 * strength,
            ..base
        },
        1 => Tics {
            drop_article: 0.3 * strength,
            ..base
        },
        2 => Tics {
            drop_third_person_s: 0.4 * strength,
            ..base
        },
        3 => Tics {
            a_before_vowel: 0.3 * strength,
            space_before_comma: strength,
            ..base
        },
        _ => Tics {
            repeat_word: 0.04 * strength,
            ..base
        },
    }
}

fn is_vowel(c: char) -> bool {
    "aeiou".contains(c)
}

/// Language-specific misspelling habits; each stays within one or two edits.
fn misspell(word: &str, kind: usize) -> Option<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() < 4 || !chars.iter().all(|c| c.is_ascii_lowercase()) {
        return None;
    }
    let mut out = chars.clone();
    match kind {
        0 => {
            // double the first consonant after a vowel
            let i = (1..chars.len()).find(|&i| !is_vowel(chars[i]) && is_vowel(chars[i - 1]))?;
            out.insert(i, chars[i]);
        }
        1 => {
            // drop an interior vowel
            let i = (1..chars.len() - 1).find(|&i| is_vowel(chars[i]))?;
            out.remove(i);
        }
        2 => {
            // swap two interior letters
            let i = chars.len() / 2;
            if chars[i - 1] == chars[i] {
                return None;
            }
            out.swap(i - 1, i);
        }
        3 => {
            // hard consonant / vowel substitutions
            let i = chars.iter().position(|&c| c == 'c' || c == 'w' || c == 'y')?;
            out[i] = match chars[i] {
                'c' => 'k',
                'w' => 'v',
                _ => 'i',
            };
        }
        _ => {
            // undouble a doubled letter, or drop a final e
            if let Some(i) = (1..chars.len()).find(|&i| chars[i] == chars[i - 1]) {
                out.remove(i);
            } else if chars.last() == Some(&'e') {
                out.pop();
            } else {
                return None;
            }
        }
    }
    Some(out.into_iter().collect())
}

struct Generator {
    lex: Lexicon,
}

impl Generator {
    fn new() -> Self {
        Generator { lex: lexicon() }
    }

    fn pick(&self, slot: &str, favourite: Option<(usize, f64)>, rng: &mut SeededRng) -> &'static str {
        let words = &self.lex.entries[slot];
        if let Some((f, rate)) = favourite {
            // favour every fifth word starting at the language offset
            if words.len() >= 8 && rng.next_f64() < rate {
                let fav: Vec<&str> = words.iter().copied().skip(f % 5).step_by(5).collect();
                return fav[rng.below(fav.len())];
            }
        }
        words[rng.below(words.len())]
    }

    /// Produces (token, tag) pairs for one clean sentence.
    fn clean_sentence(&self, rng: &mut SeededRng, favourite: Option<(usize, f64)>) -> Vec<(String, String)> {
        let template = TEMPLATES[rng.below(TEMPLATES.len())];
        let mut out = Vec::with_capacity(template.len());
        for &slot in template {
            let (word, tag) = match slot {
                "VBZ" => (vbz(self.pick("VB", favourite, rng)), "VBZ"),
                "VBP" => (self.pick("VB", favourite, rng).to_string(), "VBP"),
                "PRP3" | "PRPPL" => (self.pick(slot, None, rng).to_string(), "PRP"),
                "TO" => ("to".into(), "TO"),
                "," => (",".into(), ","),
                "." | "?" => (slot.to_string(), "."),
                _ => (self.pick(slot, favourite, rng).to_string(), slot),
            };
            out.push((word, tag.to_string()));
        }
        // a/an agreement for a lone article pick
        for i in 0..out.len().saturating_sub(1) {
            if out[i].1 == "DT" && out[i].0 == "some" && rng.next_f64() < 0.3 {
                let next_vowel = out[i + 1].0.starts_with(is_vowel);
                out[i].0 = if next_vowel { "an" } else { "a" }.into();
            }
        }
        if let Some(first) = out.first_mut() {
            first.0 = capitalize(&first.0);
        }
        out
    }
}

fn capitalize(w: &str) -> String {
    let mut cs = w.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

/// Tagged sentences from the clean grammar.
pub fn tagged_corpus(n_sentences: usize, seed: u64) -> Vec<TaggedSentence> {
    let g = Generator::new();
    let mut rng = SeededRng::derived(seed, "tagged");
    (0..n_sentences)
        .map(|_| {
            let (tokens, tags) = g.clean_sentence(&mut rng, None).into_iter().unzip();
            TaggedSentence { tokens, tags }
        })
        .collect()
}

/// CoNLL-style text of [`tagged_corpus`].
pub fn tagged_corpus_conll(n_sentences: usize, seed: u64) -> String {
    let mut out = String::new();
    for s in tagged_corpus(n_sentences, seed) {
        for (w, t) in s.tokens.iter().zip(&s.tags) {
            out.push_str(w);
            out.push('\t');
            out.push_str(t);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

fn author_sentence(g: &Generator, tics: &Tics, rng: &mut SeededRng) -> String {
    let mut toks = g.clean_sentence(rng, Some((tics.favourite, tics.favourite_rate)));
    let lowered_first = toks[0].0.to_lowercase();
    if toks[0].0 != "I" {
        toks[0].0 = lowered_first;
    }
    let mut words: Vec<String> = Vec::with_capacity(toks.len() + 2);
    if let Some(opener) = tics.opener {
        if rng.next_f64() < tics.opener_rate {
            words.push(opener.into());
            words.push(",".into());
        }
    }
    let mut i = 0;
    while i < toks.len() {
        let (w, tag) = (&toks[i].0, toks[i].1.as_str());
        if tag == "DT" && w == "the" && rng.next_f64() < tics.drop_article {
            i += 1;
            continue;
        }
        let mut w = w.clone();
        if tag == "VBZ" && rng.next_f64() < tics.drop_third_person_s {
            w = w.strip_suffix("es").filter(|s| s.ends_with("ch")).map(String::from)
                .unwrap_or_else(|| w.strip_suffix('s').unwrap_or(&w).to_string());
        }
        if tag == "DT" && rng.next_f64() < tics.a_before_vowel {
            w = "a".into();
        }
        if rng.next_f64() < tics.spelling_rate {
            if let Some(m) = misspell(&w, tics.spelling_kind) {
                w = m;
            }
        }
        if tag == "," && rng.next_f64() < tics.space_before_comma {
            words.push(",".into());
        } else if tag == "," || tag == "." {
            match words.last_mut() {
                Some(last) => last.push_str(&w),
                None => words.push(w.clone()),
            }
        } else {
            words.push(w.clone());
        }
        if tag != "," && tag != "." && rng.next_f64() < tics.repeat_word {
            words.push(w);
        }
        i += 1;
    }
    if rng.next_f64() < 0.02 {
        words.push("https://example.org/p".into());
    }
    let mut s = words.join(" ");
    if let Some(c) = s.get(..1) {
        s = c.to_uppercase() + &s[1..];
    }
    s
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusSpec {
    pub authors_per_language: usize,
    pub europe_authors_per_language: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub europe_sentences: usize,
    /// Scales every language-specific habit; 1.0 makes them blatant.
    pub tic_strength: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            authors_per_language: 10,
            europe_authors_per_language: 4,
            min_sentences: 600,
            max_sentences: 1200,
            europe_sentences: 320,
            tic_strength: 0.15,
            seed: 2024,
        }
    }
}

/// Author records for the five pseudo-languages, both partitions.
pub fn author_corpus(spec: &CorpusSpec) -> Vec<AuthorRecord> {
    let g = Generator::new();
    let mut rng = SeededRng::derived(spec.seed, "authors");
    let mut out = Vec::new();
    for (li, lang) in LANGUAGES.iter().enumerate() {
        let tics = tics_for(li, spec.tic_strength);
        for partition in [Partition::NonEurope, Partition::Europe] {
            let (n_authors, tag) = match partition {
                Partition::NonEurope => (spec.authors_per_language, "n"),
                Partition::Europe => (spec.europe_authors_per_language, "e"),
            };
            for a in 0..n_authors {
                let n = match partition {
                    Partition::NonEurope => {
                        spec.min_sentences + rng.below(spec.max_sentences - spec.min_sentences + 1)
                    }
                    Partition::Europe => spec.europe_sentences,
                };
                let mut sentences: Vec<String> =
                    (0..n).map(|_| author_sentence(&g, &tics, &mut rng)).collect();
                // occasional messy whitespace for the normalizer
                if let Some(s) = sentences.first_mut() {
                    *s = format!("  {}   ", s.replace(' ', "  "));
                }
                out.push(AuthorRecord {
                    author_id: format!("{}-{tag}{a:02}", lang.to_lowercase()),
                    native_language: lang.to_string(),
                    partition,
                    sentences,
                });
            }
        }
    }
    out
}

pub fn author_corpus_jsonl(spec: &CorpusSpec) -> String {
    author_corpus(spec)
        .iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect()
}

/// Every distinct lowercase word the grammar can emit.
pub fn vocabulary() -> Vec<String> {
    let lex = lexicon();
    let mut v: Vec<String> = lex
        .entries
        .values()
        .flatten()
        .map(|w| w.to_lowercase())
        .collect();
    v.extend(lex.entries["VB"].iter().map(|w| vbz(w)));
    v.extend(["to", "a", "an", "actually"].map(String::from));
    v.sort();
    v.dedup();
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingStyle {
    /// Weak label signal dominated by a shared direction.
    Pretrained,
    /// Strong, well separated label signal.
    Finetuned,
}

fn label_means(labels: &[String], style: EmbeddingStyle, seed: u64) -> BTreeMap<String, Vec<f64>> {
    let scale = match style {
        EmbeddingStyle::Pretrained => 0.1,
        EmbeddingStyle::Finetuned => 0.2,
    };
    labels
        .iter()
        .map(|l| {
            let mut r = SeededRng::derived(seed, &format!("mean/{l}"));
            (l.clone(), (0..EMBEDDING_DIM).map(|_| scale * r.normal()).collect())
        })
        .collect()
}

struct EmbeddingModel {
    means: BTreeMap<String, Vec<f64>>,
    offset: Vec<f64>,
    seed: u64,
}

impl EmbeddingModel {
    fn new<'a>(labels: impl Iterator<Item = &'a str>, style: EmbeddingStyle, seed: u64) -> Self {
        let mut labels: Vec<String> = labels.map(String::from).collect();
        labels.sort();
        labels.dedup();
        let mut shared = SeededRng::derived(seed, "shared");
        EmbeddingModel {
            means: label_means(&labels, style, seed),
            offset: (0..EMBEDDING_DIM).map(|_| shared.normal()).collect(),
            seed,
        }
    }

    /// Shared offset plus `signal` times the label mean plus unit noise
    /// seeded by `key`.
    fn vector(&self, key: &str, label: &str, signal: f64) -> Vec<f64> {
        let mut r = SeededRng::derived(self.seed, &format!("noise/{key}"));
        self.means[label]
            .iter()
            .zip(&self.offset)
            .map(|(m, o)| signal * m + o + r.normal())
            .collect()
    }
}

/// One record per (chunk_id, label), with the vector drawn around a
/// per-label mean.
pub fn embeddings<'a>(
    chunks: impl IntoIterator<Item = (&'a str, &'a str)>,
    style: EmbeddingStyle,
    model_tag: &str,
    input_size: u32,
    seed: u64,
) -> Vec<EmbeddingRecord> {
    let chunks: Vec<(&str, &str)> = chunks.into_iter().collect();
    let model = EmbeddingModel::new(chunks.iter().map(|c| c.1), style, seed);
    chunks
        .iter()
        .map(|(id, label)| EmbeddingRecord {
            chunk_id: id.to_string(),
            label: label.to_string(),
            model_tag: model_tag.to_string(),
            input_size,
            vector: model.vector(id, label, 1.0),
        })
        .collect()
}

/// Records `<chunk_id>@<percent>` for prefixes of the given chunks. The
/// label signal shrinks with the square root of the kept fraction, so
/// shorter slices are harder to classify.
pub fn slice_embeddings<'a>(
    all_labels: impl IntoIterator<Item = &'a str>,
    chunks: impl IntoIterator<Item = (&'a str, &'a str)>,
    percents: &[u32],
    style: EmbeddingStyle,
    model_tag: &str,
    input_size: u32,
    seed: u64,
) -> Vec<EmbeddingRecord> {
    let model = EmbeddingModel::new(all_labels.into_iter(), style, seed);
    let mut out = Vec::new();
    for (id, label) in chunks {
        for &p in percents {
            let key = format!("{id}@{p}");
            out.push(EmbeddingRecord {
                vector: model.vector(&key, label, (f64::from(p) / 100.0).sqrt()),
                chunk_id: key,
                label: label.to_string(),
                model_tag: model_tag.to_string(),
                input_size,
            });
        }
    }
    out
}

fn lt_match(rule: &str, message: &str, offset: usize, length: usize) -> Value {
    json!({
        "message": message,
        "offset": offset,
        "length": length,
        "rule": {"id": rule, "description": message}
    })
}

/// A LanguageTool-shaped `/v2/check` response from a handful of toy rules.
/// Used to build offline cache fixtures; it is not a grammar checker.
pub fn toy_grammar_response(text: &str) -> String {
    let verbs = lexicon().entries["VB"].clone();
    let mut matches = Vec::new();
    let mut line_start = 0;
    for line in text.split('\n') {
        let toks: Vec<(usize, &str)> = line
            .split(' ')
            .scan(0usize, |pos, t| {
                let start = *pos;
                *pos += t.len() + 1;
                Some((start, t))
            })
            .filter(|(_, t)| !t.is_empty())
            .collect();
        if let Some((_, first)) = toks.first() {
            if first.starts_with(|c: char| c.is_lowercase()) {
                matches.push(lt_match(
                    "UPPERCASE_SENTENCE_START",
                    "This sentence does not start with an uppercase letter.",
                    line_start,
                    first.len()));
            }
        }
        for w in toks.windows(2) {
            let (pa, a) = w[0];
            let (pb, b) = w[1];
            let (al, bl) = (a.to_lowercase(), b.to_lowercase());
            let bare = |s: &str| s.trim_end_matches([',', '.', '?']).to_string();
            if al == "a" && bl.starts_with(is_vowel) {
                matches.push(lt_match("EN_A_VS_AN", "Use \"an\" instead of \"a\".", line_start + pa, a.len()));
            }
            if matches!(al.as_str(), "he" | "she" | "it")
                && verbs.contains(&bare(&bl).as_str())
            {
                matches.push(lt_match("HE_VERB_AGR", "The pronoun requires a third-person verb form.", line_start + pb, b.len()));
            }
            if al == bare(&bl) && al.chars().all(char::is_alphabetic) {
                matches.push(lt_match("ENGLISH_WORD_REPEAT_RULE", "Possible typo: you repeated a word.", line_start + pa, pb + b.len() - pa));
            }
            if b == "," {
                matches.push(lt_match("COMMA_PARENTHESIS_WHITESPACE", "Put a space after the comma, but not before the comma.", line_start + pa + a.len(), 2));
            }
        }
        line_start += line.len() + 1;
    }
    json!({
        "software": {"name": "LanguageTool", "apiVersion": 1},
        "language": {"name": "English (US)", "code": "en-US"},
        "matches": matches
    })
    .to_string()
}
