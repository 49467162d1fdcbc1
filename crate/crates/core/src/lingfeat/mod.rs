//! Linguistic feature extraction: seven feature families concatenated into
//! one sparse vector per chunk.

pub mod edit;
pub mod ngram;
pub mod pos;
pub mod spelling;
pub mod stylo;
pub mod substitution;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grammar::{fit_grammar_vocab, grammar_features, GrammarVocabulary};
use crate::postag::TaggerModel;
use ngram::{fit_ngram_vocab, ngram_counts, NgramKind, NgramVocabulary};
use pos::{fit_pos_vocab, pos_trigram_counts, tag_sentences, PosVocabulary, POS_TOP_K};
use spelling::SpellChecker;
use stylo::{avg_sentence_length, function_word_counts, FunctionWords, FUNCTION_WORD_COUNT};
use substitution::{fit_substitution_vocab, substitution_features, SubstitutionVocabulary, SUBSTITUTION_TOP_K};

pub const NGRAM_TOP_K: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    WordUnigram,
    CharTrigram,
    Substitution,
    AvgEditDistance,
    Grammar,
    PosTrigram,
    FunctionWord,
    AvgSentenceLength,
}

/// Block layout. Every block except the grammar block has a fixed width;
/// a fitted vocabulary smaller than its block leaves trailing zero columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub grammar_dim: usize,
}

impl FeatureSchema {
    /// Width of everything except the grammar block.
    pub const FIXED_DIM: usize = NGRAM_TOP_K * 2 + SUBSTITUTION_TOP_K + 1 + POS_TOP_K + FUNCTION_WORD_COUNT + 1;

    pub fn new(grammar_dim: usize) -> Self {
        FeatureSchema { grammar_dim }
    }

    pub fn blocks(&self) -> [(Block, usize); 8] {
        [
            (Block::WordUnigram, NGRAM_TOP_K),
            (Block::CharTrigram, NGRAM_TOP_K),
            (Block::Substitution, SUBSTITUTION_TOP_K),
            (Block::AvgEditDistance, 1),
            (Block::Grammar, self.grammar_dim),
            (Block::PosTrigram, POS_TOP_K),
            (Block::FunctionWord, FUNCTION_WORD_COUNT),
            (Block::AvgSentenceLength, 1),
        ]
    }

    pub fn total_dim(&self) -> usize {
        self.blocks().iter().map(|b| b.1).sum()
    }

    pub fn offset(&self, block: Block) -> usize {
        self.blocks()
            .iter()
            .take_while(|b| b.0 != block)
            .map(|b| b.1)
            .sum()
    }
}

/// Sparse vector: ascending indices, zeros omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn from_dense(values: &[f64]) -> Self {
        FeatureVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |k| self.entries[k].1)
    }
}

/// Resources supplied by the user rather than fitted.
#[derive(Clone)]
pub struct Resources {
    pub speller: Arc<SpellChecker>,
    pub tagger: Arc<TaggerModel>,
    pub function_words: Arc<FunctionWords>,
}

/// Everything fitted on the training chunks. Serialized as the features
/// artifact and fingerprinted so later stages can detect a refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub word_unigram: NgramVocabulary,
    pub char_trigram: NgramVocabulary,
    pub substitution: SubstitutionVocabulary,
    pub pos_trigram: PosVocabulary,
    pub grammar: GrammarVocabulary,
}

impl Vocabularies {
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("vocabularies serialize");
        hex::encode(Sha256::digest(json))
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(self.grammar.len())
    }
}

/// The text of one chunk (or a slice of one) plus the grammar rules that
/// fired on it.
#[derive(Debug, Clone, Copy)]
pub struct ChunkInput<'a> {
    pub sentences: &'a [String],
    pub grammar_rules: &'a BTreeSet<String>,
}

pub fn fit_vocabularies(train: &[ChunkInput<'_>], resources: &Resources) -> Result<Vocabularies> {
    if train.is_empty() {
        return Err(Error::Validation("no training chunks to fit vocabularies on".into()));
    }
    let texts: Vec<String> = train.iter().map(|c| c.sentences.join("\n")).collect();
    let tagged: Vec<Vec<Vec<String>>> = train
        .par_iter()
        .map(|c| tag_sentences(c.sentences, &resources.tagger))
        .collect();
    Ok(Vocabularies {
        word_unigram: fit_ngram_vocab(&texts, NgramKind::WordUnigram, NGRAM_TOP_K),
        char_trigram: fit_ngram_vocab(&texts, NgramKind::CharTrigram, NGRAM_TOP_K),
        substitution: fit_substitution_vocab(&texts, &resources.speller, SUBSTITUTION_TOP_K),
        pos_trigram: fit_pos_vocab(&tagged, POS_TOP_K),
        grammar: fit_grammar_vocab(train.iter().map(|c| c.grammar_rules)),
    })
}

/// Fitted state for feature assembly. Any missing piece is reported as a
/// not-fitted error rather than silently producing zeros.
#[derive(Clone, Default)]
pub struct FittedArtifacts {
    pub vocabularies: Option<Vocabularies>,
    pub speller: Option<Arc<SpellChecker>>,
    pub tagger: Option<Arc<TaggerModel>>,
    pub function_words: Option<Arc<FunctionWords>>,
}

impl FittedArtifacts {
    pub fn new(vocabularies: Vocabularies, resources: &Resources) -> Self {
        FittedArtifacts {
            vocabularies: Some(vocabularies),
            speller: Some(resources.speller.clone()),
            tagger: Some(resources.tagger.clone()),
            function_words: Some(resources.function_words.clone()),
        }
    }
}

fn place(dense: &mut [f64], offset: usize, width: usize, values: impl IntoIterator<Item = f64>) {
    for (i, v) in values.into_iter().take(width).enumerate() {
        dense[offset + i] = v;
    }
}

pub fn assemble_features(
    input: &ChunkInput<'_>,
    schema: &FeatureSchema,
    artifacts: &FittedArtifacts,
) -> Result<FeatureVector> {
    let vocab = artifacts
        .vocabularies
        .as_ref()
        .ok_or(Error::NotFitted("feature vocabularies"))?;
    let speller = artifacts.speller.as_ref().ok_or(Error::NotFitted("spelling dictionary"))?;
    let tagger = artifacts.tagger.as_ref().ok_or(Error::NotFitted("part-of-speech tagger"))?;
    let fwords = artifacts
        .function_words
        .as_ref()
        .ok_or(Error::NotFitted("function-word list"))?;
    if schema.grammar_dim != vocab.grammar.len() {
        return Err(Error::Shape(format!(
            "schema has {} grammar columns but the vocabulary has {} rules",
            schema.grammar_dim,
            vocab.grammar.len()
        )));
    }

    let text = input.sentences.join("\n");
    let mut dense = vec![0.0; schema.total_dim()];
    let block = |dense: &mut Vec<f64>, b: Block, values: Vec<f64>| {
        let width = schema.blocks().iter().find(|x| x.0 == b).map_or(0, |x| x.1);
        place(dense, schema.offset(b), width, values);
    };
    let as_f64 = |v: Vec<u64>| v.into_iter().map(|c| c as f64).collect::<Vec<_>>();

    block(&mut dense, Block::WordUnigram, as_f64(ngram_counts(&text, &vocab.word_unigram)));
    block(&mut dense, Block::CharTrigram, as_f64(ngram_counts(&text, &vocab.char_trigram)));
    let subst = substitution_features(&text, speller, &vocab.substitution);
    block(&mut dense, Block::Substitution, as_f64(subst.counts));
    block(&mut dense, Block::AvgEditDistance, vec![subst.avg_edit_distance]);
    block(&mut dense, Block::Grammar, grammar_features(input.grammar_rules, &vocab.grammar));
    let tagged = tag_sentences(input.sentences, tagger);
    block(&mut dense, Block::PosTrigram, as_f64(pos_trigram_counts(&tagged, &vocab.pos_trigram)));
    block(&mut dense, Block::FunctionWord, as_f64(function_word_counts(&text, fwords)));
    block(&mut dense, Block::AvgSentenceLength, vec![avg_sentence_length(input.sentences)]);

    if let Some(bad) = dense.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Numeric(format!("feature value {bad} out of range")));
    }
    Ok(FeatureVector::from_dense(&dense))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub chunk_id: String,
    pub label: String,
    pub features: FeatureVector,
}

/// Header `dim=<N> rows=<M>`, then `chunk_id<TAB>label<TAB>i:v i:v ...`.
pub fn write_matrix(path: &Path, dim: usize, rows: &[MatrixRow]) -> Result<()> {
    let ctx = || path.display().to_string();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
    let mut line = String::new();
    writeln!(w, "dim={dim} rows={}", rows.len()).map_err(|e| Error::io(ctx(), e))?;
    for r in rows {
        if r.features.dim != dim {
            return Err(Error::Shape(format!(
                "row `{}` has dimension {}, expected {dim}",
                r.chunk_id, r.features.dim
            )));
        }
        line.clear();
        let _ = write!(line, "{}\t{}\t", r.chunk_id, r.label);
        for (k, (i, v)) in r.features.entries.iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{i}:{v}");
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn read_matrix(path: &Path) -> Result<(usize, Vec<MatrixRow>)> {
    let ctx = || path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(ctx(), e))?;
    let mut lines = BufReader::new(f).lines().enumerate();
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(ctx(), e))?,
        None => return Err(perr(1, "empty matrix file".into())),
    };
    let (dim, n_rows) = parse_header(&header).ok_or_else(|| perr(1, format!("bad header `{header}`")))?;
    let mut rows = Vec::with_capacity(n_rows);
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(ctx(), e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(label), Some(body)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(perr(i + 1, "expected chunk_id<TAB>label<TAB>features".into()));
        };
        let mut entries = Vec::new();
        for pair in body.split_whitespace() {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| perr(i + 1, format!("bad pair `{pair}`")))?;
            let idx: usize = a.parse().map_err(|_| perr(i + 1, format!("bad index `{a}`")))?;
            let val: f64 = b.parse().map_err(|_| perr(i + 1, format!("bad value `{b}`")))?;
            if idx >= dim || entries.last().is_some_and(|&(p, _)| p >= idx) {
                return Err(perr(i + 1, format!("index {idx} out of order or range")));
            }
            entries.push((idx, val));
        }
        rows.push(MatrixRow {
            chunk_id: id.to_string(),
            label: label.to_string(),
            features: FeatureVector { dim, entries },
        });
    }
    if rows.len() != n_rows {
        return Err(perr(1, format!("header promises {n_rows} rows, found {}", rows.len())));
    }
    Ok((dim, rows))
}

fn parse_header(h: &str) -> Option<(usize, usize)> {
    let mut it = h.split_whitespace();
    let dim = it.next()?.strip_prefix("dim=")?.parse().ok()?;
    let rows = it.next()?.strip_prefix("rows=")?.parse().ok()?;
    Some((dim, rows))
}
