//! Pipeline stages. Each reads the files earlier stages wrote and writes
//! into its own directory under the output root.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use nli_core::classifier::DenseMatrix;
use nli_core::corpus::{self, Chunk, Split};
use nli_core::embedstore::{self, EmbeddingRecord, EMBEDDING_DIM};
use nli_core::evalkit::{self, EvalReport, LengthReport, LENGTH_PERCENTS};
use nli_core::grammar::{rule_set, rules_within, utf16_len, GrammarClient, GrammarMatch, ResponseCache};
use nli_core::lingfeat::spelling::{Dictionary, SpellChecker};
use nli_core::lingfeat::stylo::FunctionWords;
use nli_core::lingfeat::{
    assemble_features, fit_vocabularies, read_matrix, write_matrix, ChunkInput, FeatureVector, FittedArtifacts,
    MatrixRow, Resources, Vocabularies,
};
use nli_core::postag::{load_tagged_corpus, train_tagger, TaggerModel};
use nli_core::spacelab;
use nli_core::synth::{self, CorpusSpec, EmbeddingStyle};
use nli_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Loaded, LINGUISTIC_MODEL};
use crate::manifest::{meta_path, read_json, write_json, MatrixMeta, RunManifest};

/// A JSON artifact body tagged with the configuration that produced it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    #[serde(rename = "result")]
    pub body: T,
}

struct StageDir<'a> {
    loaded: &'a Loaded,
    name: &'static str,
    dir: PathBuf,
    outputs: Vec<String>,
}

impl<'a> StageDir<'a> {
    fn open(loaded: &'a Loaded, name: &'static str) -> Result<Self> {
        let dir = loaded.stage_dir(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(StageDir {
            loaded,
            name,
            dir,
            outputs: Vec::new(),
        })
    }

    /// Path for an output file, recorded in the run manifest.
    fn file(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
        self.outputs.push(rel.to_string());
        Ok(p)
    }

    fn stamped<T: Serialize>(&mut self, rel: &str, body: T) -> Result<()> {
        let p = self.file(rel)?;
        write_json(
            &p,
            &Stamped {
                config_hash: self.loaded.hash.clone(),
                body,
            },
        )
    }

    fn finish(self) -> Result<()> {
        let m = RunManifest::new(self.name, self.loaded, self.outputs);
        write_json(&self.dir.join("run-manifest.json"), &m)?;
        info!("{} done, outputs in {}", self.name, self.dir.display());
        Ok(())
    }
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

fn chunk_store(l: &Loaded) -> PathBuf {
    l.stage_dir("prepare").join("chunks.jsonl")
}

fn load_chunks(l: &Loaded) -> Result<Vec<Chunk>> {
    let p = chunk_store(l);
    if !p.exists() {
        return Err(Error::Config(format!("{} not found, run `prepare` first", p.display())));
    }
    corpus::read_chunks(&p)
}

fn split_of(chunks: &[Chunk], split: Split) -> Vec<Chunk> {
    chunks.iter().filter(|c| c.split == split).cloned().collect()
}

/// Linguistic models first, then embedding models by name.
fn models(l: &Loaded) -> Vec<String> {
    let mut v = Vec::new();
    if l.config.feature_set.linguistic() {
        v.push(LINGUISTIC_MODEL.to_string());
    }
    if l.config.feature_set.embeddings() {
        v.extend(l.config.paths.embeddings.keys().cloned());
    }
    v
}

fn matrix_paths(l: &Loaded, model: &str) -> (PathBuf, PathBuf) {
    if model == LINGUISTIC_MODEL {
        let d = l.stage_dir("features");
        (d.join("exp.matrix"), d.join("oos.matrix"))
    } else {
        let d = l.stage_dir("embeddings");
        (d.join(format!("{model}.exp.matrix")), d.join(format!("{model}.oos.matrix")))
    }
}

struct LoadedMatrix {
    ids: Vec<String>,
    labels: Vec<String>,
    x: DenseMatrix,
    meta: MatrixMeta,
}

fn load_matrix(path: &Path) -> Result<LoadedMatrix> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} not found, run `features` or `embed-import` first",
            path.display()
        )));
    }
    let meta: MatrixMeta = read_json(&meta_path(path))?;
    let (dim, rows) = read_matrix(path)?;
    if dim != meta.dim || rows.len() != meta.rows {
        return Err(Error::Protocol(format!("{} does not match its sidecar", path.display())));
    }
    let dense: Vec<Vec<f64>> = rows.iter().map(|r| r.features.to_dense()).collect();
    let x = if dense.is_empty() {
        DenseMatrix::zeros(0, dim)
    } else {
        DenseMatrix::from_rows(&dense)?
    };
    Ok(LoadedMatrix {
        ids: rows.iter().map(|r| r.chunk_id.clone()).collect(),
        labels: rows.into_iter().map(|r| r.label).collect(),
        x,
        meta,
    })
}

fn save_matrix(stage: &mut StageDir<'_>, rel: &str, rows: &[MatrixRow], dim: usize, meta: MatrixMeta) -> Result<()> {
    let p = stage.file(rel)?;
    write_matrix(&p, dim, rows)?;
    let m = stage.file(&format!("{rel}.meta.json"))?;
    write_json(&m, &meta)
}

fn resources(l: &Loaded, tagger: Arc<TaggerModel>) -> Result<Resources> {
    let p = &l.config.paths;
    let dict = match &p.dictionary {
        Some(d) => Dictionary::load(&l.resolve(d))?,
        None => Dictionary::bundled(),
    };
    let fw = match &p.function_words {
        Some(f) => FunctionWords::load(&l.resolve(f))?,
        None => FunctionWords::bundled(),
    };
    Ok(Resources {
        speller: Arc::new(SpellChecker::new(dict)),
        tagger,
        function_words: Arc::new(fw),
    })
}

fn tagger_path(l: &Loaded) -> PathBuf {
    l.stage_dir("features").join("tagger.json")
}

fn load_tagger(l: &Loaded) -> Result<Arc<TaggerModel>> {
    let p = tagger_path(l);
    if !p.exists() {
        return Err(Error::Config(format!("{} not found, run `features` first", p.display())));
    }
    let stamped: Stamped<serde_json::Value> = read_json(&p)?;
    Ok(Arc::new(TaggerModel::from_json(&stamped.body.to_string())?))
}

fn grammar_client(l: &Loaded) -> Result<GrammarClient> {
    let cache = ResponseCache::new(l.cache_dir());
    GrammarClient::http(l.config.grammar.client_config(), Some(cache))
}

fn check_chunks(client: &GrammarClient, chunks: &[Chunk]) -> Result<Vec<Vec<GrammarMatch>>> {
    let sentences: Vec<Vec<String>> = chunks.iter().map(|c| c.sentences.clone()).collect();
    client.check_many(&sentences)
}

pub fn prepare(l: &Loaded) -> Result<()> {
    let records = corpus::load_corpus(&l.resolve(&l.config.paths.corpus))?;
    let prepared = corpus::prepare(records, &l.config.sampling)?;
    let all: Vec<Chunk> = prepared.all_chunks().cloned().collect();
    let mut stage = StageDir::open(l, "prepare")?;
    corpus::write_chunks(&stage.file("chunks.jsonl")?, &all)?;
    corpus::write_split_manifest(&stage.file("split-manifest.jsonl")?, &all)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        labels: &'a [String],
        tune: usize,
        exp: usize,
        oos: usize,
    }
    stage.stamped(
        "summary.json",
        Summary {
            labels: prepared.labels.labels(),
            tune: prepared.tune.len(),
            exp: prepared.exp.len(),
            oos: prepared.oos.len(),
        },
    )?;
    info!(
        "{} labels, {} tune / {} exp / {} oos chunks",
        prepared.labels.len(),
        prepared.tune.len(),
        prepared.exp.len(),
        prepared.oos.len()
    );
    stage.finish()
}

/// Chunks the linguistic features are computed for: experiment and out-of-sample splits.
fn feature_chunks(l: &Loaded) -> Result<(Vec<Chunk>, Vec<Chunk>)> {
    let chunks = load_chunks(l)?;
    Ok((split_of(&chunks, Split::Exp), split_of(&chunks, Split::Oos)))
}

pub fn grammar_cache(l: &Loaded) -> Result<()> {
    let (exp, oos) = feature_chunks(l)?;
    let all: Vec<Chunk> = exp.into_iter().chain(oos).collect();
    let client = grammar_client(l)?;
    let matches = check_chunks(&client, &all)?;
    let rules: BTreeSet<String> = matches.iter().flat_map(|m| rule_set(m)).collect();

    #[derive(Serialize)]
    struct Summary {
        chunks_checked: usize,
        rule_ids: Vec<String>,
    }
    let mut stage = StageDir::open(l, "grammar")?;
    stage.stamped(
        "summary.json",
        Summary {
            chunks_checked: all.len(),
            rule_ids: rules.into_iter().collect(),
        },
    )?;
    stage.finish()
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    fingerprint: String,
    vocabularies: Vocabularies,
}

fn featurize_rows(chunks: &[Chunk], rules: &[BTreeSet<String>], artifacts: &FittedArtifacts) -> Result<Vec<MatrixRow>> {
    let vocab = artifacts.vocabularies.as_ref().ok_or(Error::NotFitted("feature vocabularies"))?;
    let schema = vocab.schema();
    chunks
        .par_iter()
        .zip(rules)
        .map(|(c, r)| {
            let input = ChunkInput {
                sentences: &c.sentences,
                grammar_rules: r,
            };
            Ok(MatrixRow {
                chunk_id: c.chunk_id.clone(),
                label: c.label.clone(),
                features: assemble_features(&input, &schema, artifacts)?,
            })
        })
        .collect()
}

pub fn features(l: &Loaded) -> Result<()> {
    let (exp, oos) = feature_chunks(l)?;
    if exp.is_empty() {
        return Err(Error::Validation("no experiment chunks to fit features on".into()));
    }
    let start = Instant::now();
    let tagged = load_tagged_corpus(&l.resolve(&l.config.paths.tagged_corpus))?;
    let tagger = Arc::new(train_tagger(&tagged, l.config.tagger_epochs, l.config.seeds.tagger)?);
    let res = resources(l, tagger.clone())?;
    let client = grammar_client(l)?;
    let exp_rules: Vec<BTreeSet<String>> = check_chunks(&client, &exp)?.iter().map(|m| rule_set(m)).collect();
    let oos_rules: Vec<BTreeSet<String>> = check_chunks(&client, &oos)?.iter().map(|m| rule_set(m)).collect();

    let inputs: Vec<ChunkInput<'_>> = exp
        .iter()
        .zip(&exp_rules)
        .map(|(c, r)| ChunkInput {
            sentences: &c.sentences,
            grammar_rules: r,
        })
        .collect();
    let vocab = fit_vocabularies(&inputs, &res)?;
    let fingerprint = vocab.fingerprint();
    let dim = vocab.schema().total_dim();
    let artifacts = FittedArtifacts::new(vocab.clone(), &res);
    let exp_rows = featurize_rows(&exp, &exp_rules, &artifacts)?;
    let oos_rows = featurize_rows(&oos, &oos_rules, &artifacts)?;
    let hours = evalkit::duration_hours(start.elapsed().as_secs_f64());
    info!("linguistic features: dim {dim}, {} exp and {} oos rows", exp_rows.len(), oos_rows.len());

    let mut stage = StageDir::open(l, "features")?;
    let model: serde_json::Value = serde_json::from_str(&tagger.to_json()?)?;
    stage.stamped("tagger.json", model)?;
    stage.stamped(
        "vocabularies.json",
        VocabularyFile {
            fingerprint: fingerprint.clone(),
            vocabularies: vocab,
        },
    )?;
    for (rel, rows) in [("exp.matrix", &exp_rows), ("oos.matrix", &oos_rows)] {
        let meta = MatrixMeta {
            config_hash: l.hash.clone(),
            model: LINGUISTIC_MODEL.into(),
            fingerprint: fingerprint.clone(),
            dim,
            rows: rows.len(),
            duration_hours: hours,
        };
        save_matrix(&mut stage, rel, rows, dim, meta)?;
    }
    stage.finish()
}

/// All records must come from one model at one input size.
fn embedding_fingerprint(name: &str, records: &[EmbeddingRecord]) -> Result<String> {
    let mut tags: BTreeSet<(String, u32)> = records.iter().map(|r| (r.model_tag.clone(), r.input_size)).collect();
    if tags.len() > 1 {
        return Err(Error::Protocol(format!(
            "embedding file for `{name}` mixes {} model tag / input size pairs",
            tags.len()
        )));
    }
    let (tag, size) = tags
        .pop_first()
        .ok_or_else(|| Error::Validation(format!("embedding file for `{name}` is empty")))?;
    Ok(format!("{tag}@{size}"))
}

fn embedding_rows(chunks: &[Chunk], vectors: Vec<Vec<f64>>) -> Vec<MatrixRow> {
    chunks
        .iter()
        .zip(vectors)
        .map(|(c, v)| MatrixRow {
            chunk_id: c.chunk_id.clone(),
            label: c.label.clone(),
            features: FeatureVector::from_dense(&v),
        })
        .collect()
}

pub fn embed_import(l: &Loaded) -> Result<()> {
    let (exp, oos) = feature_chunks(l)?;
    let mut stage = StageDir::open(l, "embeddings")?;
    for (name, src) in &l.config.paths.embeddings {
        let records = embedstore::read_embeddings(&l.resolve(&src.path))?;
        let fingerprint = embedding_fingerprint(name, &records)?;
        let both: Vec<Chunk> = exp.iter().chain(&oos).cloned().collect();
        let mut joined = embedstore::join(records, &both)?.rows;
        let oos_rows = joined.split_off(exp.len());
        info!("{name}: {} exp and {} oos vectors ({fingerprint})", exp.len(), oos.len());
        for (part, chunks, vectors) in [("exp", &exp, joined), ("oos", &oos, oos_rows)] {
            let rows = embedding_rows(chunks, vectors);
            let meta = MatrixMeta {
                config_hash: l.hash.clone(),
                model: name.clone(),
                fingerprint: fingerprint.clone(),
                dim: EMBEDDING_DIM,
                rows: rows.len(),
                duration_hours: src.duration_hours.unwrap_or(0.0),
            };
            save_matrix(&mut stage, &format!("{name}.{part}.matrix"), &rows, EMBEDDING_DIM, meta)?;
        }
    }
    stage.finish()
}

fn fold_assignment(l: &Loaded, m: &LoadedMatrix) -> Result<(evalkit::FoldAssignment, Vec<usize>)> {
    let items: Vec<(String, String)> = m.ids.iter().cloned().zip(m.labels.iter().cloned()).collect();
    let folds = evalkit::stratified_folds(&items, l.config.evaluation.folds, l.config.seeds.folds)?;
    let idx = folds.fold_indices(&m.ids)?;
    Ok((folds, idx))
}

/// Cross-validation with the linguistic vocabularies refitted on the
/// training part of every fold.
fn strict_linguistic_cv(l: &Loaded, m: &LoadedMatrix, fold_idx: &[usize]) -> Result<evalkit::CvOutcome> {
    let (exp, _) = feature_chunks(l)?;
    let by_id: HashMap<&str, &Chunk> = exp.iter().map(|c| (c.chunk_id.as_str(), c)).collect();
    let chunks: Vec<Chunk> = m
        .ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|c| (*c).clone())
                .ok_or_else(|| Error::Join { missing: vec![id.clone()] })
        })
        .collect::<Result<_>>()?;
    let res = resources(l, load_tagger(l)?)?;
    let client = grammar_client(l)?;
    let rules: Vec<BTreeSet<String>> = check_chunks(&client, &chunks)?.iter().map(|m| rule_set(m)).collect();
    evalkit::cross_validate_with(&m.labels, fold_idx, l.config.evaluation.folds, &l.config.classifier, |tr, te| {
        let inputs: Vec<ChunkInput<'_>> = tr
            .iter()
            .map(|&i| ChunkInput {
                sentences: &chunks[i].sentences,
                grammar_rules: &rules[i],
            })
            .collect();
        let artifacts = FittedArtifacts::new(fit_vocabularies(&inputs, &res)?, &res);
        let rows = |idx: &[usize]| -> Result<DenseMatrix> {
            let picked: Vec<Chunk> = idx.iter().map(|&i| chunks[i].clone()).collect();
            let r: Vec<BTreeSet<String>> = idx.iter().map(|&i| rules[i].clone()).collect();
            let dense: Vec<Vec<f64>> = featurize_rows(&picked, &r, &artifacts)?
                .iter()
                .map(|row| row.features.to_dense())
                .collect();
            DenseMatrix::from_rows(&dense)
        };
        Ok((rows(tr)?, rows(te)?))
    })
}

pub fn cv(l: &Loaded) -> Result<()> {
    let mut stage = StageDir::open(l, "cv")?;
    let k = l.config.evaluation.folds;
    let mut wrote_folds = false;
    for model in models(l) {
        let m = load_matrix(&matrix_paths(l, &model).0)?;
        let (folds, idx) = fold_assignment(l, &m)?;
        if !wrote_folds {
            stage.stamped("folds.json", &folds)?;
            wrote_folds = true;
        }
        let outcome = if model == LINGUISTIC_MODEL && l.config.evaluation.strict_refit {
            strict_linguistic_cv(l, &m, &idx)?
        } else {
            evalkit::cross_validate(&m.x, &m.labels, &idx, k, &l.config.classifier)?
        };
        let report = EvalReport {
            model_name: model.clone(),
            duration_hours: m.meta.duration_hours,
            acva: outcome.acva,
            oosa: None,
            per_fold: outcome.per_fold,
        };
        report.validate()?;
        info!("{model}: acva {}", evalkit::format_accuracy(report.acva));
        stage.stamped(&format!("{model}.json"), &report)?;
    }
    stage.finish()
}

#[derive(Debug, Serialize, Deserialize)]
struct OosResult {
    model_name: String,
    oosa: Option<f64>,
}

pub fn oos(l: &Loaded) -> Result<()> {
    let mut stage = StageDir::open(l, "oos")?;
    for model in models(l) {
        let (exp_path, oos_path) = matrix_paths(l, &model);
        let tr = load_matrix(&exp_path)?;
        let te = load_matrix(&oos_path)?;
        let oosa = if te.ids.is_empty() {
            None
        } else {
            Some(evalkit::evaluate_oos(
                &tr.x,
                &tr.labels,
                &te.x,
                &te.labels,
                &tr.meta.fingerprint,
                &te.meta.fingerprint,
                &l.config.classifier,
            )?)
        };
        info!("{model}: oosa {}", oosa.map_or("-".into(), evalkit::format_accuracy));
        stage.stamped(&format!("{model}.json"), OosResult { model_name: model.clone(), oosa })?;
    }
    stage.finish()
}

fn read_slice_records(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let mut map = HashMap::new();
    for r in embedstore::read_embeddings(path)? {
        if map.insert(r.chunk_id.clone(), r.vector).is_some() {
            return Err(Error::Duplicate {
                what: "slice embedding",
                id: r.chunk_id,
            });
        }
    }
    Ok(map)
}

pub fn length_sense(l: &Loaded) -> Result<()> {
    let (exp, _) = feature_chunks(l)?;
    let eval = &l.config.evaluation;
    let mut stage = StageDir::open(l, "length")?;
    let mut holdout: Option<Vec<String>> = None;
    for model in models(l) {
        let m = load_matrix(&matrix_paths(l, &model).0)?;
        let row_of: HashMap<&str, usize> = m.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let full = |c: &Chunk| -> Result<Vec<f64>> {
            row_of
                .get(c.chunk_id.as_str())
                .map(|&i| m.x.row(i).to_vec())
                .ok_or_else(|| Error::Join {
                    missing: vec![c.chunk_id.clone()],
                })
        };
        let report = if model == LINGUISTIC_MODEL {
            let vf: Stamped<VocabularyFile> = read_json(&l.stage_dir("features").join("vocabularies.json"))?;
            if vf.body.fingerprint != m.meta.fingerprint {
                return Err(Error::Protocol("vocabularies.json does not match exp.matrix".into()));
            }
            let res = resources(l, load_tagger(l)?)?;
            let schema = vf.body.vocabularies.schema();
            let artifacts = FittedArtifacts::new(vf.body.vocabularies, &res);
            let client = grammar_client(l)?;
            let featurize = |c: &Chunk, p: Option<u32>| -> Result<Vec<f64>> {
                let Some(p) = p else { return full(c) };
                let slice = evalkit::slice_sentences(&c.sentences, p);
                // rules come from the full-chunk check, restricted to the prefix
                let matches = client.check_text(&c.sentences)?;
                let rules = rules_within(&matches, utf16_len(&slice.join("\n")));
                let input = ChunkInput {
                    sentences: slice,
                    grammar_rules: &rules,
                };
                Ok(assemble_features(&input, &schema, &artifacts)?.to_dense())
            };
            evalkit::length_sensitivity(&model, &exp, featurize, &eval.percents, eval.holdout, l.config.seeds.holdout, &l.config.classifier)?
        } else {
            let Some(path) = l.config.paths.slice_embeddings.get(&model) else {
                log::warn!("no slice embeddings for `{model}`, skipping its length analysis");
                continue;
            };
            let slices = read_slice_records(&l.resolve(path))?;
            let featurize = |c: &Chunk, p: Option<u32>| -> Result<Vec<f64>> {
                let Some(p) = p else { return full(c) };
                let key = format!("{}@{p}", c.chunk_id);
                slices.get(&key).cloned().ok_or(Error::Join { missing: vec![key] })
            };
            evalkit::length_sensitivity(&model, &exp, featurize, &eval.percents, eval.holdout, l.config.seeds.holdout, &l.config.classifier)?
        };
        info!("{model}: {:?}", report.accuracy);
        if holdout.is_none() {
            holdout = Some(report.holdout_ids.clone());
        }
        stage.stamped(&format!("{model}.json"), &report)?;
    }
    if let Some(ids) = holdout {
        #[derive(Serialize)]
        struct Line<'a> {
            chunk_id: &'a str,
        }
        let body: String = ids
            .iter()
            .map(|id| serde_json::to_string(&Line { chunk_id: id }).map(|s| s + "\n"))
            .collect::<std::result::Result<_, _>>()?;
        write_text(&stage.file("holdout.jsonl")?, &body)?;
    }
    stage.finish()
}

/// Per-label centroids of a model's experiment rows, labels ascending.
fn model_centroids(l: &Loaded, model: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let m = load_matrix(&matrix_paths(l, model).0)?;
    let mut by_label: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (i, label) in m.labels.iter().enumerate() {
        by_label.entry(label.clone()).or_default().push(m.x.row(i).to_vec());
    }
    Ok(spacelab::centroids(&by_label)?.into_iter().unzip())
}

pub fn cluster(l: &Loaded) -> Result<()> {
    let mut stage = StageDir::open(l, "cluster")?;
    for model in models(l) {
        let (labels, points) = model_centroids(l, &model)?;
        let linkage = spacelab::ward_linkage(&points)?;
        write_text(
            &stage.file(&format!("{model}/linkage.json"))?,
            &(serde_json::to_string_pretty(&linkage)? + "\n"),
        )?;
        write_text(&stage.file(&format!("{model}/dendrogram.nwk"))?, &spacelab::to_newick(&linkage, &labels)?)?;
        write_text(
            &stage.file(&format!("{model}/dendrogram.svg"))?,
            &spacelab::dendrogram_svg(&linkage, &labels),
        )?;
    }
    stage.finish()
}

#[derive(Serialize)]
struct PcaSummary<'a> {
    labels: &'a [String],
    explained_variance_ratio: [f64; 2],
}

pub fn pca(l: &Loaded) -> Result<()> {
    let mut stage = StageDir::open(l, "pca")?;
    for model in models(l) {
        let (labels, points) = model_centroids(l, &model)?;
        let proj = spacelab::pca_project(&points)?;
        write_text(&stage.file(&format!("{model}/pca.tsv"))?, &spacelab::pca_tsv(&proj, &labels))?;
        write_text(&stage.file(&format!("{model}/pca.svg"))?, &spacelab::pca_svg(&proj, &labels))?;
        stage.stamped(
            &format!("{model}/pca.json"),
            PcaSummary {
                labels: &labels,
                explained_variance_ratio: proj.explained_variance_ratio,
            },
        )?;
    }
    stage.finish()
}

pub fn report(l: &Loaded) -> Result<()> {
    let mut reports = Vec::new();
    let mut series = Vec::new();
    for model in models(l) {
        let cv_path = l.stage_dir("cv").join(format!("{model}.json"));
        if !cv_path.exists() {
            log::warn!("no cross-validation result for `{model}`, leaving it out");
            continue;
        }
        let mut r: Stamped<EvalReport> = read_json(&cv_path)?;
        let oos_path = l.stage_dir("oos").join(format!("{model}.json"));
        if oos_path.exists() {
            let o: Stamped<OosResult> = read_json(&oos_path)?;
            r.body.oosa = o.body.oosa;
        }
        reports.push(r.body);
        let len_path = l.stage_dir("length").join(format!("{model}.json"));
        if len_path.exists() {
            let s: Stamped<LengthReport> = read_json(&len_path)?;
            series.push(s.body);
        }
    }
    if reports.is_empty() {
        return Err(Error::Config("no cross-validation results found, run `cv` first".into()));
    }
    let mut stage = StageDir::open(l, "report")?;
    for f in ["report.json", "table.txt", "length.tsv"] {
        stage.file(f)?;
    }
    evalkit::emit_report(&reports, &series, &stage.dir, &l.hash)?;
    print!("{}", evalkit::render_table(&reports));
    stage.finish()
}

/// Writes the synthetic author corpus and tagged corpus into `out`.
pub fn synth_corpus(out: &Path, spec: &CorpusSpec, tagged_sentences: usize) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    write_text(&out.join("corpus.jsonl"), &synth::author_corpus_jsonl(spec))?;
    write_text(
        &out.join("tagged.conll"),
        &synth::tagged_corpus_conll(tagged_sentences, spec.seed),
    )
}

/// Writes class-correlated embedding files for the experiment and out-of-sample chunks
/// of a chunk store: `<style>.jsonl` plus `<style>.slices.jsonl` holding
/// prefix-slice vectors of the experiment chunks.
pub fn synth_embeddings(chunk_store: &Path, out: &Path, seed: u64) -> Result<()> {
    let chunks: Vec<Chunk> = corpus::read_chunks(chunk_store)?
        .into_iter()
        .filter(|c| c.split != Split::Tune)
        .collect();
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let styles = [
        ("pretrained", EmbeddingStyle::Pretrained, "synthetic-pretrained", 512),
        ("finetuned", EmbeddingStyle::Finetuned, "synthetic-finetuned", 2048),
    ];
    let labels: Vec<&str> = chunks.iter().map(|c| c.label.as_str()).collect();
    let exp: Vec<(&str, &str)> = chunks
        .iter()
        .filter(|c| c.split == Split::Exp)
        .map(|c| (c.chunk_id.as_str(), c.label.as_str()))
        .collect();
    for (name, style, tag, size) in styles {
        let recs = synth::embeddings(
            chunks.iter().map(|c| (c.chunk_id.as_str(), c.label.as_str())),
            style,
            tag,
            size,
            seed,
        );
        embedstore::write_embeddings(&recs, &out.join(format!("{name}.jsonl")))?;
        let slices = synth::slice_embeddings(labels.iter().copied(), exp.iter().copied(), &LENGTH_PERCENTS, style, tag, size, seed);
        embedstore::write_embeddings(&slices, &out.join(format!("{name}.slices.jsonl")))?;
    }
    Ok(())
}
