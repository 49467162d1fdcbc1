//! Corpus ingestion, normalization, chunking, balancing and splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const CHUNK_SIZE: usize = 100;
pub const URL_TOKEN: &str = "<URL>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Europe,
    NonEurope,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Europe => "europe",
            Partition::NonEurope => "non_europe",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Tune,
    Exp,
    Oos,
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorRecord {
    pub author_id: String,
    pub native_language: String,
    pub partition: Partition,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub author_id: String,
    pub label: String,
    pub partition: Partition,
    pub split: Split,
    pub sentences: Vec<String>,
}

impl Chunk {
    /// Sentences joined by newline, the form sent to the grammar service and
    /// sliced by the length analysis.
    pub fn text(&self) -> String {
        self.sentences.join("\n")
    }
}

/// Sorted, duplicate-free list of class labels.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.sort();
        labels.dedup();
        LabelSet { labels }
    }

    pub fn from_records(records: &[AuthorRecord]) -> Self {
        Self::new(records.iter().map(|r| r.native_language.clone()))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub authors_per_language: usize,
    pub chunk_cap_per_author: usize,
    pub seed: u64,
}

impl SamplingConfig {
    /// 273 authors and 17 chunks per author, the non-Europe setting.
    pub fn non_europe_default() -> Self {
        SamplingConfig {
            authors_per_language: 273,
            chunk_cap_per_author: 17,
            seed: 13,
        }
    }

    /// 104 authors and 3 chunks per author, the Europe setting.
    pub fn europe_default() -> Self {
        SamplingConfig {
            authors_per_language: 104,
            chunk_cap_per_author: 3,
            seed: 17,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.authors_per_language == 0 || self.chunk_cap_per_author == 0 {
            return Err(Error::Config(
                "authors_per_language and chunk_cap_per_author must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<AuthorRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_corpus(BufReader::new(file), path)
}

pub fn parse_corpus<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<AuthorRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(origin.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AuthorRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if record.sentences.is_empty() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message: format!("author `{}` has no sentences", record.author_id),
            });
        }
        if !seen.insert(record.author_id.clone()) {
            return Err(Error::Duplicate {
                what: "author_id",
                id: record.author_id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

fn is_url(token: &str) -> bool {
    let lower = token.get(..8).unwrap_or(token).to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Collapses whitespace runs to one space, trims, and replaces URL tokens
/// with [`URL_TOKEN`].
pub fn preprocess_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for token in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(if is_url(token) { URL_TOKEN } else { token });
    }
    out
}

/// Normalizes every sentence and drops the ones left empty.
pub fn preprocess_record(mut record: AuthorRecord) -> AuthorRecord {
    record.sentences = record
        .sentences
        .iter()
        .map(|s| preprocess_text(s))
        .filter(|s| !s.is_empty())
        .collect();
    record
}

pub fn chunk_author(record: &AuthorRecord, chunk_size: usize) -> Vec<Chunk> {
    assert!(chunk_size > 0, "chunk_size must be positive");
    record
        .sentences
        .chunks_exact(chunk_size)
        .enumerate()
        .map(|(ordinal, sentences)| Chunk {
            chunk_id: format!("{}#{}", record.author_id, ordinal),
            author_id: record.author_id.clone(),
            label: record.native_language.clone(),
            partition: record.partition,
            split: Split::Unassigned,
            sentences: sentences.to_vec(),
        })
        .collect()
}

/// Keeps exactly `n_per_language` authors per label. Output preserves the
/// input order of the kept records.
pub fn balance_authors(
    records: &[AuthorRecord],
    n_per_language: usize,
    seed: u64,
) -> Result<Vec<AuthorRecord>> {
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_label.entry(r.native_language.as_str()).or_default().push(i);
    }
    let mut rng = SeededRng::new(seed);
    let mut keep = Vec::with_capacity(by_label.len() * n_per_language);
    for (label, members) in &by_label {
        if members.len() < n_per_language {
            return Err(Error::UnderRepresented {
                label: label.to_string(),
                count: members.len(),
                required: n_per_language,
            });
        }
        keep.extend(
            rng.sample(members.len(), n_per_language)
                .into_iter()
                .map(|k| members[k]),
        );
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| records[i].clone()).collect())
}

/// Each author keeps `min(cap, own count)` chunks. Authors are visited in
/// id order; kept chunks stay in ordinal order.
pub fn cap_chunks(
    chunks_by_author: &BTreeMap<String, Vec<Chunk>>,
    cap: usize,
    seed: u64,
) -> Vec<Chunk> {
    assert!(cap > 0, "cap must be positive");
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::new();
    for chunks in chunks_by_author.values() {
        if chunks.len() <= cap {
            out.extend(chunks.iter().cloned());
        } else {
            out.extend(
                rng.sample(chunks.len(), cap)
                    .into_iter()
                    .map(|i| chunks[i].clone()),
            );
        }
    }
    out
}

pub fn group_by_author(chunks: Vec<Chunk>) -> BTreeMap<String, Vec<Chunk>> {
    let mut map: BTreeMap<String, Vec<Chunk>> = BTreeMap::new();
    for c in chunks {
        map.entry(c.author_id.clone()).or_default().push(c);
    }
    map
}

/// Chunk-level 50/50 split of non-Europe chunks into (tune, exp). With an
/// odd count the tune side gets the extra chunk. Both halves keep input order.
pub fn make_splits(chunks: &[Chunk], seed: u64) -> Result<(Vec<Chunk>, Vec<Chunk>)> {
    if let Some(c) = chunks.iter().find(|c| c.partition != Partition::NonEurope) {
        return Err(Error::Partition {
            chunk_id: c.chunk_id.clone(),
            partition: c.partition.to_string(),
            expected: Partition::NonEurope.to_string(),
        });
    }
    let n = chunks.len();
    let tune_idx = SeededRng::new(seed).sample(n, n - n / 2);
    let mut is_tune = vec![false; n];
    for i in tune_idx {
        is_tune[i] = true;
    }
    let mut tune = Vec::with_capacity(n - n / 2);
    let mut exp = Vec::with_capacity(n / 2);
    for (c, t) in chunks.iter().zip(is_tune) {
        let mut c = c.clone();
        if t {
            c.split = Split::Tune;
            tune.push(c);
        } else {
            c.split = Split::Exp;
            exp.push(c);
        }
    }
    Ok((tune, exp))
}

/// Tags Europe chunks as out-of-sample.
pub fn tag_oos(chunks: &[Chunk]) -> Result<Vec<Chunk>> {
    chunks
        .iter()
        .map(|c| {
            if c.partition != Partition::Europe {
                return Err(Error::Partition {
                    chunk_id: c.chunk_id.clone(),
                    partition: c.partition.to_string(),
                    expected: Partition::Europe.to_string(),
                });
            }
            let mut c = c.clone();
            c.split = Split::Oos;
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub non_europe: SamplingConfig,
    pub europe: SamplingConfig,
    pub split_seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            non_europe: SamplingConfig::non_europe_default(),
            europe: SamplingConfig::europe_default(),
            split_seed: 19,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub labels: LabelSet,
    pub tune: Vec<Chunk>,
    pub exp: Vec<Chunk>,
    pub oos: Vec<Chunk>,
}

impl PreparedCorpus {
    pub fn all_chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.tune.iter().chain(&self.exp).chain(&self.oos)
    }
}

fn sample_partition(records: Vec<AuthorRecord>, cfg: &SamplingConfig) -> Result<Vec<Chunk>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let balanced = balance_authors(&records, cfg.authors_per_language, cfg.seed)?;
    let chunks: Vec<Chunk> = balanced
        .par_iter()
        .flat_map_iter(|r| chunk_author(r, CHUNK_SIZE))
        .collect();
    Ok(cap_chunks(
        &group_by_author(chunks),
        cfg.chunk_cap_per_author,
        cfg.seed.wrapping_add(1),
    ))
}

/// preprocess → balance (per partition) → chunk → cap → split.
pub fn prepare(records: Vec<AuthorRecord>, cfg: &PrepareConfig) -> Result<PreparedCorpus> {
    cfg.non_europe.validate()?;
    cfg.europe.validate()?;
    let labels = LabelSet::from_records(&records);
    let records: Vec<AuthorRecord> = records.into_par_iter().map(preprocess_record).collect();
    let (europe, non_europe): (Vec<_>, Vec<_>) = records
        .into_iter()
        .partition(|r| r.partition == Partition::Europe);

    let non_europe = sample_partition(non_europe, &cfg.non_europe)?;
    let europe = sample_partition(europe, &cfg.europe)?;
    let (tune, exp) = make_splits(&non_europe, cfg.split_seed)?;
    let oos = tag_oos(&europe)?;
    Ok(PreparedCorpus {
        labels,
        tune,
        exp,
        oos,
    })
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    for c in chunks {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let chunk: Chunk = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(chunk.chunk_id.clone()) {
            return Err(Error::Duplicate {
                what: "chunk_id",
                id: chunk.chunk_id,
            });
        }
        out.push(chunk);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ManifestLine<'a> {
    chunk_id: &'a str,
    split: Split,
}

pub fn write_split_manifest(path: &Path, chunks: &[Chunk]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    for c in chunks {
        serde_json::to_writer(
            &mut w,
            &ManifestLine {
                chunk_id: &c.chunk_id,
                split: c.split,
            },
        )?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, label: &str, n: usize) -> AuthorRecord {
        AuthorRecord {
            author_id: id.into(),
            native_language: label.into(),
            partition: Partition::NonEurope,
            sentences: (0..n).map(|i| format!("sentence {i}")).collect(),
        }
    }

    fn parse(text: &str) -> Result<Vec<AuthorRecord>> {
        parse_corpus(text.as_bytes(), Path::new("mem.jsonl"))
    }

    #[test]
    fn loads_one_line() {
        let recs = parse(
            r#"{"author_id":"u1","native_language":"Dutch","partition":"europe","sentences":["Hi ."]}"#,
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].partition, Partition::Europe);
    }

    #[test]
    fn missing_key_is_named() {
        let err = parse(r#"{"author_id":"u1","partition":"europe","sentences":["x"]}"#)
            .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(msg.contains("native_language"), "{msg}");
    }

    #[test]
    fn duplicate_author_rejected() {
        let line = r#"{"author_id":"u1","native_language":"A","partition":"europe","sentences":["x"]}"#;
        let err = parse(&format!("{line}\n{line}\n")).unwrap_err();
        assert!(matches!(err, Error::Duplicate { ref id, .. } if id == "u1"));
    }

    #[test]
    fn bad_partition_rejected() {
        let err = parse(r#"{"author_id":"u","native_language":"A","partition":"asia","sentences":["x"]}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess_text("go  to   https://x.com now"), "go to <URL> now");
        assert_eq!(preprocess_text(""), "");
        assert_eq!(preprocess_text("  see www.a.b\tand http://q "), "see <URL> and <URL>");
        assert_eq!(preprocess_text("wwwx http"), "wwwx http");
    }

    proptest! {
        #[test]
        fn preprocess_idempotent(s in "[a-z :/.\\t\\nwhtps]{0,60}") {
            let once = preprocess_text(&s);
            prop_assert_eq!(preprocess_text(&once), once.clone());
            if !once.contains(URL_TOKEN) {
                prop_assert!(once.len() <= s.len());
            }
        }
    }

    #[test]
    fn chunking_floor() {
        assert_eq!(chunk_author(&record("a", "X", 250), 100).len(), 2);
        assert!(chunk_author(&record("a", "X", 99), 100).is_empty());
        let r = record("a", "X", 100);
        let c = chunk_author(&r, 100);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].sentences, r.sentences);
        assert_eq!(c[0].chunk_id, "a#0");
    }

    fn population(counts: &[(&str, usize)]) -> Vec<AuthorRecord> {
        let mut v = Vec::new();
        for (label, n) in counts {
            for i in 0..*n {
                v.push(record(&format!("{label}{i}"), label, 1));
            }
        }
        v
    }

    #[test]
    fn balancing_counts_and_determinism() {
        let recs = population(&[("A", 5), ("B", 4), ("C", 10)]);
        let out = balance_authors(&recs, 4, 9).unwrap();
        assert_eq!(out.len(), 12);
        for l in ["A", "B", "C"] {
            assert_eq!(out.iter().filter(|r| r.native_language == l).count(), 4);
        }
        assert_eq!(out, balance_authors(&recs, 4, 9).unwrap());
    }

    #[test]
    fn balancing_names_short_label() {
        let recs = population(&[("A", 5), ("Lithuanian", 3)]);
        match balance_authors(&recs, 4, 1).unwrap_err() {
            Error::UnderRepresented { label, count, .. } => {
                assert_eq!(label, "Lithuanian");
                assert_eq!(count, 3);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn capping() {
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), chunk_author(&record("a", "X", 2000), 100));
        map.insert("b".to_string(), chunk_author(&record("b", "X", 1000), 100));
        let out = cap_chunks(&map, 17, 4);
        assert_eq!(out.iter().filter(|c| c.author_id == "a").count(), 17);
        assert_eq!(out.iter().filter(|c| c.author_id == "b").count(), 10);
        assert_eq!(out, cap_chunks(&map, 17, 4));
        let three = cap_chunks(&map, 3, 4);
        assert_eq!(three.len(), 6);
    }

    fn chunks(n: usize) -> Vec<Chunk> {
        chunk_author(&record("a", "X", n * 100), 100)
    }

    #[test]
    fn splits_even_and_odd() {
        let (t, e) = make_splits(&chunks(100), 3).unwrap();
        assert_eq!((t.len(), e.len()), (50, 50));
        let (t, e) = make_splits(&chunks(101), 3).unwrap();
        assert_eq!(t.len() + e.len(), 101);
        assert!(t.len().abs_diff(e.len()) <= 1);
        let (t2, _) = make_splits(&chunks(101), 3).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn splits_partition_input() {
        let input = chunks(37);
        let (t, e) = make_splits(&input, 11).unwrap();
        let ids_t: HashSet<_> = t.iter().map(|c| c.chunk_id.clone()).collect();
        let ids_e: HashSet<_> = e.iter().map(|c| c.chunk_id.clone()).collect();
        assert!(ids_t.is_disjoint(&ids_e));
        let all: HashSet<_> = input.iter().map(|c| c.chunk_id.clone()).collect();
        assert_eq!(&ids_t | &ids_e, all);
        assert!(t.iter().all(|c| c.split == Split::Tune));
        assert!(e.iter().all(|c| c.split == Split::Exp));
    }

    #[test]
    fn europe_chunk_rejected_by_split() {
        let mut c = chunks(2);
        c[1].partition = Partition::Europe;
        assert!(matches!(make_splits(&c, 1), Err(Error::Partition { .. })));
        assert!(matches!(tag_oos(&c), Err(Error::Partition { .. })));
    }

    #[test]
    fn label_set_sorted_unique() {
        let l = LabelSet::new(["b", "a", "b"]);
        assert_eq!(l.labels(), &["a".to_string(), "b".to_string()]);
        assert_eq!(l.index_of("b"), Some(1));
        assert_eq!(l.index_of("z"), None);
    }

    #[test]
    fn prepare_pipeline_invariants() {
        let mut recs = Vec::new();
        for label in ["A", "B"] {
            for i in 0..4 {
                recs.push(record(&format!("{label}{i}"), label, 450));
                let mut e = record(&format!("{label}e{i}"), label, 300);
                e.partition = Partition::Europe;
                recs.push(e);
            }
        }
        let cfg = PrepareConfig {
            non_europe: SamplingConfig {
                authors_per_language: 3,
                chunk_cap_per_author: 2,
                seed: 1,
            },
            europe: SamplingConfig {
                authors_per_language: 2,
                chunk_cap_per_author: 1,
                seed: 2,
            },
            split_seed: 3,
        };
        let p = prepare(recs, &cfg).unwrap();
        assert_eq!(p.tune.len() + p.exp.len(), 2 * 3 * 2);
        assert_eq!(p.oos.len(), 2 * 2);
        assert!(p.oos.iter().all(|c| c.split == Split::Oos && c.partition == Partition::Europe));
        let ids: HashSet<_> = p.all_chunks().map(|c| c.chunk_id.clone()).collect();
        assert_eq!(ids.len(), 16);
        assert!(p.all_chunks().all(|c| c.sentences.len() == CHUNK_SIZE));
    }
}
