//! Chunk embedding files: JSON lines of 768-dimensional vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 768;
pub const INPUT_SIZES: [u32; 3] = [512, 2048, 4096];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub chunk_id: String,
    pub label: String,
    pub model_tag: String,
    pub input_size: u32,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn validate(&self) -> Result<()> {
        if self.vector.len() != EMBEDDING_DIM {
            return Err(Error::Validation(format!(
                "embedding for `{}` has {} values, expected {EMBEDDING_DIM}",
                self.chunk_id,
                self.vector.len()
            )));
        }
        if !INPUT_SIZES.contains(&self.input_size) {
            return Err(Error::Validation(format!(
                "embedding for `{}` has input size {}, expected one of {INPUT_SIZES:?}",
                self.chunk_id, self.input_size
            )));
        }
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "embedding for `{}` has a non-finite value",
                self.chunk_id
            )));
        }
        Ok(())
    }
}

/// Validates every record before writing anything.
pub fn write_embeddings(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    for r in records {
        r.validate()?;
    }
    let ctx = || path.display().to_string();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let ctx = || path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(ctx(), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(ctx(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        r.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedEmbeddings {
    /// Row `i` belongs to the `i`-th requested chunk.
    pub rows: Vec<Vec<f64>>,
    /// Records in the file for chunks that were not requested.
    pub extra: usize,
}

pub fn join(records: Vec<EmbeddingRecord>, chunks: &[Chunk]) -> Result<JoinedEmbeddings> {
    let mut by_id: HashMap<String, EmbeddingRecord> = HashMap::with_capacity(records.len());
    for r in records {
        if by_id.contains_key(&r.chunk_id) {
            return Err(Error::Duplicate {
                what: "embedding",
                id: r.chunk_id,
            });
        }
        by_id.insert(r.chunk_id.clone(), r);
    }
    let missing: Vec<String> = chunks
        .iter()
        .filter(|c| !by_id.contains_key(&c.chunk_id))
        .map(|c| c.chunk_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Join { missing });
    }
    let mut rows = Vec::with_capacity(chunks.len());
    for c in chunks {
        let r = by_id.remove(&c.chunk_id).expect("checked above");
        if r.label != c.label {
            return Err(Error::LabelMismatch {
                chunk_id: c.chunk_id.clone(),
                expected: c.label.clone(),
                found: r.label,
            });
        }
        rows.push(r.vector);
    }
    let extra = by_id.len();
    if extra > 0 {
        log::warn!("{extra} embedding records matched no requested chunk");
    }
    Ok(JoinedEmbeddings { rows, extra })
}

pub fn read_and_join(path: &Path, chunks: &[Chunk]) -> Result<JoinedEmbeddings> {
    join(read_embeddings(path)?, chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Partition, Split};
    use proptest::prelude::*;

    fn rec(id: &str, label: &str, x: f64) -> EmbeddingRecord {
        EmbeddingRecord {
            chunk_id: id.into(),
            label: label.into(),
            model_tag: "pretrained".into(),
            input_size: 2048,
            vector: vec![x; EMBEDDING_DIM],
        }
    }

    fn chunk(id: &str, label: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            author_id: "a".into(),
            label: label.into(),
            partition: Partition::NonEurope,
            split: Split::Exp,
            sentences: vec![],
        }
    }

    #[test]
    fn rejects_bad_records_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        let mut short = rec("a#0", "x", 1.0);
        short.vector.pop();
        assert!(matches!(write_embeddings(&[short], &p), Err(Error::Validation(_))));
        assert!(!p.exists());
        let mut size = rec("a#0", "x", 1.0);
        size.input_size = 1024;
        assert!(matches!(write_embeddings(&[size], &p), Err(Error::Validation(_))));
    }

    #[test]
    fn join_keeps_requested_order() {
        let recs = vec![rec("c", "x", 3.0), rec("a", "x", 1.0), rec("b", "y", 2.0), rec("z", "y", 9.0)];
        let j = join(recs, &[chunk("a", "x"), chunk("b", "y"), chunk("c", "x")]).unwrap();
        assert_eq!(j.rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [1.0, 2.0, 3.0]);
        assert_eq!(j.extra, 1);
    }

    #[test]
    fn join_errors() {
        let e = join(vec![rec("a", "x", 1.0)], &[chunk("a", "x"), chunk("b", "x")]).unwrap_err();
        assert!(matches!(e, Error::Join { ref missing } if missing == &["b"]));
        let e = join(vec![rec("a", "x", 1.0), rec("a", "x", 1.0)], &[chunk("a", "x")]).unwrap_err();
        assert!(matches!(e, Error::Duplicate { .. }));
        let e = join(vec![rec("a", "y", 1.0)], &[chunk("a", "x")]).unwrap_err();
        assert!(matches!(e, Error::LabelMismatch { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip(values in prop::collection::vec(-1e300f64..1e300, EMBEDDING_DIM), size in 0usize..3) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("e.jsonl");
            let mut r = rec("a#1", "x", 0.0);
            r.vector = values;
            r.input_size = INPUT_SIZES[size];
            write_embeddings(std::slice::from_ref(&r), &p).unwrap();
            prop_assert_eq!(read_embeddings(&p).unwrap(), vec![r]);
        }
    }
}
