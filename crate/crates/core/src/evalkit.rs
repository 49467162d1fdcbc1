//! Evaluation protocols: stratified k-fold cross-validation, out-of-sample
//! accuracy, text-length sensitivity and report emission.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{accuracy, predict, train, DenseMatrix, TrainConfig};
use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const DEFAULT_FOLDS: usize = 10;
pub const LENGTH_PERCENTS: [u32; 4] = [10, 20, 40, 80];
pub const DEFAULT_HOLDOUT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    /// Fold index per item, in the order of `ids`.
    pub fn fold_indices<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.fold_of
                    .get(id.as_ref())
                    .copied()
                    .ok_or_else(|| Error::Join {
                        missing: vec![id.as_ref().to_string()],
                    })
            })
            .collect()
    }
}

/// Per class (in sorted label order) the members are shuffled and dealt
/// round-robin, each class continuing where the previous one stopped so the
/// overall fold sizes also stay within one of each other.
pub fn stratified_folds(items: &[(String, String)], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, label) in items {
        by_label.entry(label).or_default().push(id);
    }
    let mut rng = SeededRng::derived(seed, "folds");
    let mut fold_of = BTreeMap::new();
    let mut next = 0usize;
    for (label, mut members) in by_label {
        if members.len() < k {
            log::warn!("class `{label}` has {} members, fewer than {k} folds", members.len());
        }
        rng.shuffle(&mut members);
        for id in members {
            if fold_of.insert(id.to_string(), next % k).is_some() {
                return Err(Error::Duplicate {
                    what: "chunk",
                    id: id.to_string(),
                });
            }
            next += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub duration_hours: f64,
    pub acva: f64,
    pub oosa: Option<f64>,
    pub per_fold: Vec<f64>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let all = self.per_fold.iter().chain(self.oosa.iter()).chain([&self.acva]);
        for &a in all {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Validation(format!("accuracy {a} outside [0, 1]")));
            }
        }
        if !self.per_fold.is_empty() && (mean(&self.per_fold) - self.acva).abs() > 1e-12 {
            return Err(Error::Validation("acva is not the mean of the fold accuracies".into()));
        }
        Ok(())
    }
}

/// Arithmetic mean, summed left to right.
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Hours at two-decimal resolution, so the reported value is stable across
/// reruns on the same machine class.
pub fn duration_hours(seconds: f64) -> f64 {
    (seconds / 3600.0 * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub per_fold: Vec<f64>,
    pub acva: f64,
}

/// Cross-validation where each fold builds its own train and test matrices,
/// e.g. with vocabularies refitted on the training part only.
pub fn cross_validate_with<F>(labels: &[String], folds: &[usize], k: usize, config: &TrainConfig, featurize: F) -> Result<CvOutcome>
where
    F: Fn(&[usize], &[usize]) -> Result<(DenseMatrix, DenseMatrix)> + Sync,
{
    if folds.len() != labels.len() {
        return Err(Error::Shape(format!("{} fold indices for {} labels", folds.len(), labels.len())));
    }
    let per_fold = (0..k)
        .into_par_iter()
        .map(|f| {
            let (test, tr): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| folds[i] == f);
            if test.is_empty() {
                return Err(Error::Validation(format!("fold {f} is empty")));
            }
            let (x_train, x_test) = featurize(&tr, &test)?;
            let y_train: Vec<String> = tr.iter().map(|&i| labels[i].clone()).collect();
            let y_test: Vec<String> = test.iter().map(|&i| labels[i].clone()).collect();
            let model = train(&x_train, &y_train, config)?;
            Ok(accuracy(&predict(&model, &x_test)?.labels, &y_test))
        })
        .collect::<Result<Vec<f64>>>()?;
    let acva = mean(&per_fold);
    Ok(CvOutcome { per_fold, acva })
}

/// Cross-validation on a fixed feature matrix.
pub fn cross_validate(x: &DenseMatrix, labels: &[String], folds: &[usize], k: usize, config: &TrainConfig) -> Result<CvOutcome> {
    if x.rows != labels.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", x.rows, labels.len())));
    }
    cross_validate_with(labels, folds, k, config, |tr, te| Ok((x.select_rows(tr), x.select_rows(te))))
}

/// Trains on the experiment split and scores the out-of-sample split. Both
/// feature sets must come from the same fitted artifacts.
pub fn evaluate_oos(
    x_train: &DenseMatrix,
    y_train: &[String],
    x_oos: &DenseMatrix,
    y_oos: &[String],
    train_fingerprint: &str,
    oos_fingerprint: &str,
    config: &TrainConfig,
) -> Result<f64> {
    if train_fingerprint != oos_fingerprint {
        return Err(Error::Protocol(format!(
            "out-of-sample features were built from different artifacts ({oos_fingerprint}) than the training features ({train_fingerprint})"
        )));
    }
    let model = train(x_train, y_train, config)?;
    Ok(accuracy(&predict(&model, x_oos)?.labels, y_oos))
}

/// Number of leading lines kept for a `percent` slice of `total` lines:
/// max(1, round-half-up(percent * total / 100)).
pub fn slice_len(total: usize, percent: u32) -> usize {
    ((percent as usize * total + 50) / 100).max(1).min(total.max(1))
}

pub fn slice_lines(text: &str, percent: u32) -> String {
    let lines: Vec<&str> = text.split('\n').collect();
    lines[..slice_len(lines.len(), percent)].join("\n")
}

pub fn slice_sentences(sentences: &[String], percent: u32) -> &[String] {
    &sentences[..slice_len(sentences.len(), percent).min(sentences.len())]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    pub model_name: String,
    pub holdout_ids: Vec<String>,
    pub accuracy: BTreeMap<u32, f64>,
}

/// `featurize(chunk, None)` gives full-length features, `Some(p)` the
/// features of the chunk's first p% of lines.
pub fn length_sensitivity<F>(
    model_name: &str,
    chunks: &[Chunk],
    featurize: F,
    percents: &[u32],
    n_holdout: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<LengthReport>
where
    F: Fn(&Chunk, Option<u32>) -> Result<Vec<f64>> + Sync,
{
    if chunks.len() <= n_holdout {
        return Err(Error::Config(format!(
            "length analysis needs more than {n_holdout} chunks, got {}",
            chunks.len()
        )));
    }
    let mut rng = SeededRng::derived(seed, "holdout");
    let held = rng.sample(chunks.len(), n_holdout);
    let held_set: BTreeSet<usize> = held.iter().copied().collect();
    let train_idx: Vec<usize> = (0..chunks.len()).filter(|i| !held_set.contains(i)).collect();

    let rows = |idx: &[usize], p: Option<u32>| -> Result<DenseMatrix> {
        let r: Vec<Vec<f64>> = idx
            .par_iter()
            .map(|&i| featurize(&chunks[i], p))
            .collect::<Result<_>>()?;
        DenseMatrix::from_rows(&r)
    };
    let y_train: Vec<String> = train_idx.iter().map(|&i| chunks[i].label.clone()).collect();
    let y_held: Vec<String> = held.iter().map(|&i| chunks[i].label.clone()).collect();
    let model = train(&rows(&train_idx, None)?, &y_train, config)?;
    let mut acc = BTreeMap::new();
    for &p in percents {
        let pred = predict(&model, &rows(&held, Some(p))?)?;
        acc.insert(p, accuracy(&pred.labels, &y_held));
    }
    Ok(LengthReport {
        model_name: model_name.to_string(),
        holdout_ids: held.iter().map(|&i| chunks[i].chunk_id.clone()).collect(),
        accuracy: acc,
    })
}

/// ".475" style: three decimals without the leading zero.
pub fn format_accuracy(a: f64) -> String {
    let s = format!("{a:.3}");
    s.strip_prefix('0').map(String::from).unwrap_or(s)
}

pub fn render_table(reports: &[EvalReport]) -> String {
    let header = ["MODEL", "DUR", "ACVA", "OOSA"];
    let rows: Vec<[String; 4]> = reports
        .iter()
        .map(|r| {
            [
                r.model_name.clone(),
                format!("{:.2}", r.duration_hours),
                format_accuracy(r.acva),
                r.oosa.map_or("-".to_string(), format_accuracy),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: [&str; 4]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(width)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(padded.join(" | ").trim_end());
        out.push('\n');
    };
    line(header);
    for r in &rows {
        line([&r[0], &r[1], &r[2], &r[3]]);
    }
    out
}

pub fn render_length_tsv(series: &[LengthReport]) -> String {
    let mut out = String::from("percent\tmodel\taccuracy\n");
    for s in series {
        for (p, a) in &s.accuracy {
            let _ = writeln!(out, "{p}\t{}\t{a}", s.model_name);
        }
    }
    out
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config_hash: &'a str,
    reports: &'a [EvalReport],
    length_sensitivity: &'a [LengthReport],
}

/// Writes `report.json`, `table.txt` and `length.tsv` into `dir`.
pub fn emit_report(reports: &[EvalReport], series: &[LengthReport], dir: &Path, config_hash: &str) -> Result<()> {
    for r in reports {
        r.validate()?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let write = |name: &str, body: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p.display().to_string(), e))
    };
    let json = serde_json::to_string_pretty(&ReportFile {
        config_hash,
        reports,
        length_sensitivity: series,
    })?;
    write("report.json", (json + "\n").as_bytes())?;
    write("table.txt", render_table(reports).as_bytes())?;
    write("length.tsv", render_length_tsv(series).as_bytes())
}
