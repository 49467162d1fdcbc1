//! Acceptance suite: one PASS/FAIL line per criterion. Every oracle below is
//! written independently of the library code it checks.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{config_copy, fixture_dir, nli_ok, read_json};
use nli_core::classifier::{
    accuracy, lbfgs_minimize, loss_and_grad, predict, train, DenseMatrix, LbfgsConfig, TrainConfig,
};
use nli_core::corpus::{self, Chunk, PrepareConfig, Split};
use nli_core::evalkit::{self, EvalReport, LengthReport};
use nli_core::lingfeat::edit::edit_ops;
use nli_core::lingfeat::spelling::{Dictionary, SpellChecker};
use nli_core::lingfeat::stylo::FunctionWords;
use nli_core::lingfeat::{assemble_features, fit_vocabularies, ChunkInput, FeatureSchema, FittedArtifacts, Resources};
use nli_core::postag::train_tagger;
use nli_core::rng::SeededRng;
use nli_core::spacelab::{pca_project, ward_linkage};
use nli_core::synth;
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn schema_arithmetic() -> Outcome {
    let spec = synth::CorpusSpec {
        authors_per_language: 1,
        europe_authors_per_language: 0,
        min_sentences: 20,
        max_sentences: 20,
        ..synth::CorpusSpec::default()
    };
    let records = synth::author_corpus(&spec);
    // 2017 distinct rule ids spread over the training chunks
    let rule_ids: Vec<String> = (0..2017).map(|i| format!("FIXTURE_RULE_{i:04}")).collect();
    let rule_sets: Vec<BTreeSet<String>> = (0..records.len())
        .map(|c| rule_ids.iter().skip(c).step_by(records.len()).cloned().collect())
        .collect();
    let inputs: Vec<ChunkInput<'_>> = records
        .iter()
        .zip(&rule_sets)
        .map(|(r, g)| ChunkInput {
            sentences: &r.sentences,
            grammar_rules: g,
        })
        .collect();
    let tagger = train_tagger(&synth::tagged_corpus(300, 3), 2, 3).map_err(|e| e.to_string())?;
    let res = Resources {
        speller: SpellChecker::new(Dictionary::bundled()).into(),
        tagger: tagger.into(),
        function_words: FunctionWords::bundled().into(),
    };
    let vocab = fit_vocabularies(&inputs, &res).map_err(|e| e.to_string())?;
    let schema = vocab.schema();
    let expected = 1000 + 1000 + 400 + 1 + 2017 + 300 + 467 + 1;
    check(vocab.grammar.len() == 2017, || format!("grammar vocabulary has {} ids", vocab.grammar.len()))?;
    check(schema.total_dim() == expected, || format!("schema dim {}", schema.total_dim()))?;
    check(FeatureSchema::new(0).total_dim() == 3169, || "G=0 schema is not 3169".into())?;
    let artifacts = FittedArtifacts::new(vocab, &res);
    let v = assemble_features(&inputs[0], &schema, &artifacts).map_err(|e| e.to_string())?;
    check(v.dim == expected, || format!("assembled vector has dim {}", v.dim))?;
    Ok(format!("assembled dim {} with 2017 grammar rules", v.dim))
}

// ---------------------------------------------------------------- 2

fn levenshtein_oracle(a: &[char], b: &[char]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        table[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = table[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            table[i][j] = sub.min(table[i - 1][j] + 1).min(table[i][j - 1] + 1);
        }
    }
    table[a.len()][b.len()]
}

fn random_word(rng: &mut SeededRng, alphabet: &[char], min: usize, max: usize) -> String {
    let len = min + rng.below(max - min + 1);
    (0..len).map(|_| alphabet[rng.below(alphabet.len())]).collect()
}

fn edit_distance_oracle() -> Outcome {
    let alphabet: Vec<char> = "abcdef".chars().collect();
    let mut rng = SeededRng::new(2);
    let (mut dist_ok, mut replay_ok) = (0, 0);
    for _ in 0..1000 {
        let a = random_word(&mut rng, &alphabet, 1, 12);
        let b = random_word(&mut rng, &alphabet, 1, 12);
        let script = edit_ops(&a, &b);
        let ac: Vec<char> = a.chars().collect();
        let bc: Vec<char> = b.chars().collect();
        if script.distance == levenshtein_oracle(&ac, &bc) && script.ops.len() == script.distance {
            dist_ok += 1;
        }
        if script.replay(&a) == b {
            replay_ok += 1;
        }
    }
    check(dist_ok == 1000 && replay_ok == 1000, || {
        format!("distance agreed on {dist_ok}/1000, replay on {replay_ok}/1000")
    })?;
    Ok("1000/1000 distances and replays".into())
}

// ---------------------------------------------------------------- 3

/// Optimal string alignment distance, written as a three-row recurrence.
fn osa_oracle(a: &[char], b: &[char]) -> usize {
    let n = b.len();
    let mut two_back = vec![0usize; n + 1];
    let mut prev: Vec<usize> = (0..=n).collect();
    for i in 1..=a.len() {
        let mut cur = vec![i; n + 1];
        for j in 1..=n {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(two_back[j - 2] + 1);
            }
            cur[j] = best;
        }
        two_back = std::mem::replace(&mut prev, cur);
    }
    prev[n]
}

fn exhaustive_correct(word: &str, dict: &[(String, u64)]) -> Option<(String, usize)> {
    if dict.iter().any(|(w, _)| w == word) {
        return None;
    }
    let q: Vec<char> = word.chars().collect();
    let mut best: Option<(usize, u64, &str)> = None;
    for (w, f) in dict {
        let d = osa_oracle(&q, &w.chars().collect::<Vec<_>>());
        if d > 2 {
            continue;
        }
        let better = match best {
            None => true,
            Some((bd, bf, bw)) => d < bd || (d == bd && (*f > bf || (*f == bf && w.as_str() < bw))),
        };
        if better {
            best = Some((d, *f, w));
        }
    }
    best.map(|(d, _, w)| (w.to_string(), d))
}

fn spelling_oracle() -> Outcome {
    let alphabet: Vec<char> = "abcdefghijklmnop".chars().collect();
    let mut rng = SeededRng::new(3);
    let mut words = BTreeSet::new();
    while words.len() < 10_000 {
        words.insert(random_word(&mut rng, &alphabet, 3, 8));
    }
    // few distinct frequencies so the frequency and lexicographic tie rules both fire
    let dict: Vec<(String, u64)> = words.into_iter().map(|w| (w, 1 + rng.below(5) as u64)).collect();
    let checker = SpellChecker::new(Dictionary::from_pairs(dict.iter().map(|(w, f)| (w.as_str(), *f))));
    let mut agree = 0;
    let mut found = 0;
    for q in 0..500 {
        let query = match q % 5 {
            0 => dict[rng.below(dict.len())].0.clone(),
            1 => random_word(&mut rng, &alphabet, 2, 9),
            _ => {
                let mut w: Vec<char> = dict[rng.below(dict.len())].0.chars().collect();
                for _ in 0..=rng.below(3) {
                    let pos = rng.below(w.len() + 1);
                    match rng.below(4) {
                        0 if pos < w.len() => {
                            w.remove(pos);
                        }
                        1 => w.insert(pos, alphabet[rng.below(alphabet.len())]),
                        2 if pos + 1 < w.len() => w.swap(pos, pos + 1),
                        _ if pos < w.len() => w[pos] = alphabet[rng.below(alphabet.len())],
                        _ => w.push(alphabet[rng.below(alphabet.len())]),
                    }
                }
                w.into_iter().collect()
            }
        };
        let expected = exhaustive_correct(&query, &dict);
        let got = checker.correct(&query).map(|s| (s.term, s.distance));
        found += usize::from(expected.is_some());
        if got == expected {
            agree += 1;
        }
    }
    check(agree == 500, || format!("indexed lookup agreed on {agree}/500 queries"))?;
    Ok(format!("500/500 queries agree ({found} with a suggestion)"))
}

// ---------------------------------------------------------------- 4

fn normal_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

fn gradient_check() -> Result<f64, String> {
    let (k, d, n, h) = (4, 20, 50, 1e-5);
    let mut worst: f64 = 0.0;
    for inst in 0..20 {
        let mut rng = SeededRng::new(100 + inst);
        let x = DenseMatrix {
            rows: n,
            cols: d,
            data: normal_vec(&mut rng, n * d, 1.0),
        };
        let y: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let w = normal_vec(&mut rng, k * d, 0.3);
        let b = normal_vec(&mut rng, k, 0.3);
        let c = 0.5 + rng.next_f64();
        let (_, gw, gb) = loss_and_grad(&w, &b, &x, &y, c).map_err(|e| e.to_string())?;
        let f = |w: &[f64], b: &[f64]| loss_and_grad(w, b, &x, &y, c).unwrap().0;
        let mut params: Vec<f64> = w.iter().chain(&b).copied().collect();
        let analytic: Vec<f64> = gw.iter().chain(&gb).copied().collect();
        for p in 0..params.len() {
            let orig = params[p];
            params[p] = orig + h;
            let up = f(&params[..k * d], &params[k * d..]);
            params[p] = orig - h;
            let down = f(&params[..k * d], &params[k * d..]);
            params[p] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[p].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic[p] - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

fn classifier_numerics() -> Outcome {
    let worst = gradient_check()?;
    check(worst <= 1e-4, || format!("gradient relative error {worst:e}"))?;

    let rosen = |x: &[f64]| {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    };
    let r = lbfgs_minimize(
        rosen,
        vec![-1.2, 1.0],
        LbfgsConfig {
            memory: 10,
            tol: 1e-8,
            max_iter: 200,
        },
    );
    check(r.f < 1e-8 && r.iterations <= 200, || {
        format!("Rosenbrock ended at f={:e} after {} iterations", r.f, r.iterations)
    })?;

    let mut rng = SeededRng::new(7);
    let (per, d) = (100, 5);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..3 {
        // centres on orthogonal axes, pairwise 10 sigma apart
        let mut centre = vec![0.0; d];
        centre[class] = 10.0 / 2f64.sqrt();
        for _ in 0..per {
            rows.push(centre.iter().map(|c| c + rng.normal()).collect::<Vec<f64>>());
            labels.push(format!("blob{class}"));
        }
    }
    let x = DenseMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
    let model = train(&x, &labels, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let acc = accuracy(&predict(&model, &x).map_err(|e| e.to_string())?.labels, &labels);
    check(acc >= 0.99, || format!("3-blob train accuracy {acc}"))?;
    Ok(format!(
        "grad rel err {worst:.1e}; Rosenbrock f={:.1e} in {} iters; blobs {acc:.3}",
        r.f, r.iterations
    ))
}

// ---------------------------------------------------------------- 5

fn sse(points: &[Vec<f64>], members: &[usize]) -> f64 {
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for &m in members {
        for (a, v) in mean.iter_mut().zip(&points[m]) {
            *a += v;
        }
    }
    for a in mean.iter_mut() {
        *a /= members.len() as f64;
    }
    members
        .iter()
        .map(|&m| points[m].iter().zip(&mean).map(|(v, c)| (v - c) * (v - c)).sum::<f64>())
        .sum()
}

/// Merges the pair with the smallest SSE increase, recomputing every
/// candidate from the raw points. Returns (smaller id, larger id, height, size).
fn naive_ward(points: &[Vec<f64>]) -> Vec<(usize, usize, f64, usize)> {
    let n = points.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for m in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let mut union = clusters[i].1.clone();
                union.extend(&clusters[j].1);
                let inc = sse(points, &union) - sse(points, &clusters[i].1) - sse(points, &clusters[j].1);
                let ids = |a: usize, b: usize| {
                    let (x, y) = (clusters[a].0, clusters[b].0);
                    (x.min(y), x.max(y))
                };
                let better = match best {
                    None => true,
                    Some((bi, bx, by)) => inc < bi || (inc == bi && ids(i, j) < ids(bx, by)),
                };
                if better {
                    best = Some((inc, i, j));
                }
            }
        }
        let (inc, i, j) = best.unwrap();
        let (a, b) = (clusters[i].0, clusters[j].0);
        let mut union = clusters[i].1.clone();
        union.extend(&clusters[j].1);
        out.push((a.min(b), a.max(b), (2.0 * inc.max(0.0)).sqrt(), union.len()));
        clusters.remove(j);
        clusters.remove(i);
        clusters.push((n + m, union));
    }
    out
}

fn ward_oracle() -> Outcome {
    let mut rng = SeededRng::new(5);
    let mut worst: f64 = 0.0;
    for inst in 0..200 {
        let n = 2 + rng.below(7);
        let d = 1 + rng.below(3);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| 10.0 * rng.next_f64()).collect()).collect();
        let got = ward_linkage(&pts).map_err(|e| e.to_string())?;
        let want = naive_ward(&pts);
        for (g, w) in got.iter().zip(&want) {
            let pair = (g.left.min(g.right), g.left.max(g.right));
            check(pair == (w.0, w.1) && g.size == w.3, || {
                format!("instance {inst}: merged {pair:?}, oracle merged ({}, {})", w.0, w.1)
            })?;
            worst = worst.max((g.height - w.2).abs());
        }
    }
    check(worst <= 1e-9, || format!("height mismatch {worst:e}"))?;
    let fixture = ward_linkage(&[vec![0.0], vec![2.0], vec![10.0]]).map_err(|e| e.to_string())?;
    check(
        (fixture[0].height - 2.0).abs() <= 1e-9 && (fixture[1].height - 108f64.sqrt()).abs() <= 1e-9,
        || format!("{{0,2,10}} heights {} and {}", fixture[0].height, fixture[1].height),
    )?;
    Ok(format!("200 instances agree, max height diff {worst:.1e}; {{0,2,10}} -> 2, sqrt(108)"))
}

// ---------------------------------------------------------------- 6

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pca_properties() -> Outcome {
    let mut rng = SeededRng::new(6);
    let mut directions = 0;
    for trial in 0..20 {
        let n = 3 + rng.below(28);
        let d = 2 + rng.below(9);
        let scales: Vec<f64> = (0..d).map(|_| 0.2 + 3.0 * rng.next_f64()).collect();
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| scales.iter().map(|s| s * rng.normal() + 1.0).collect())
            .collect();
        let p = pca_project(&pts).map_err(|e| e.to_string())?;
        let [c0, c1] = &p.components;
        let ortho = [(dot(c0, c0) - 1.0).abs(), (dot(c1, c1) - 1.0).abs(), dot(c0, c1).abs()];
        check(ortho.iter().all(|e| *e <= 1e-9), || format!("trial {trial}: components not orthonormal {ortho:?}"))?;
        let [r0, r1] = p.explained_variance_ratio;
        check(
            (0.0..=1.0).contains(&r0) && (0.0..=1.0).contains(&r1) && r0 + r1 <= 1.0 + 1e-9,
            || format!("trial {trial}: ratios {r0} {r1}"),
        )?;
        let mut mean = vec![0.0; d];
        for q in &pts {
            for (m, v) in mean.iter_mut().zip(q) {
                *m += v / n as f64;
            }
        }
        let var_along = |u: &[f64]| -> f64 {
            pts.iter()
                .map(|q| {
                    let c: Vec<f64> = q.iter().zip(&mean).map(|(v, m)| v - m).collect();
                    dot(&c, u).powi(2)
                })
                .sum::<f64>()
        };
        let pc1 = var_along(c0);
        for _ in 0..50 {
            let mut u = normal_vec(&mut rng, d, 1.0);
            let norm = dot(&u, &u).sqrt();
            u.iter_mut().for_each(|v| *v /= norm);
            let v = var_along(&u);
            check(pc1 >= v * (1.0 - 1e-12), || format!("trial {trial}: direction beats PC1 ({v} > {pc1})"))?;
            directions += 1;
        }
    }
    let rank1 = pca_project(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 0.0]]).map_err(|e| e.to_string())?;
    check((rank1.explained_variance_ratio[0] - 1.0).abs() <= 1e-9, || {
        format!("rank-1 ratio {}", rank1.explained_variance_ratio[0])
    })?;
    let want = [-2.0, 0.0, 2.0];
    check(
        rank1.coords.iter().zip(want).all(|(c, w)| (c[0] - w).abs() <= 1e-9 && c[1].abs() <= 1e-9),
        || format!("rank-1 coords {:?}", rank1.coords),
    )?;
    Ok(format!("20 trials orthonormal; PC1 beat {directions} random directions; rank-1 ratio 1"))
}

// ---------------------------------------------------------------- 7

fn fixture_chunks() -> Result<Vec<Chunk>, String> {
    let cfg: Value = read_json(&fixture_dir().join("config.json"));
    let sampling: PrepareConfig = serde_json::from_value(cfg["sampling"].clone()).map_err(|e| e.to_string())?;
    let records = corpus::load_corpus(&fixture_dir().join("corpus.jsonl")).map_err(|e| e.to_string())?;
    let p = corpus::prepare(records, &sampling).map_err(|e| e.to_string())?;
    Ok(p.all_chunks().cloned().collect())
}

fn letter_profile(sentences: &[String]) -> Vec<f64> {
    let mut v = vec![0.0; 27];
    let mut total: f64 = 0.0;
    for s in sentences {
        for ch in s.chars() {
            let i = if ch.is_ascii_lowercase() { (ch as u8 - b'a') as usize } else { 26 };
            v[i] += 1.0;
            total += 1.0;
        }
    }
    v.iter_mut().for_each(|x| *x /= total.max(1.0));
    v
}

fn protocol_invariants() -> Outcome {
    // folds on uneven classes, one smaller than k
    let sizes = [23, 17, 40, 9, 31];
    let mut items = Vec::new();
    for (c, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            items.push((format!("L{c}-{i}"), format!("L{c}")));
        }
    }
    let folds = evalkit::stratified_folds(&items, 10, 11).map_err(|e| e.to_string())?;
    check(folds.fold_of.len() == items.len(), || "folds do not cover every item".into())?;
    check(folds.fold_of.values().all(|&f| f < 10), || "fold index out of range".into())?;
    for (c, _) in sizes.iter().enumerate() {
        let mut count = [0usize; 10];
        for (id, label) in &items {
            if *label == format!("L{c}") {
                count[folds.fold_of[id]] += 1;
            }
        }
        let (lo, hi) = (count.iter().min().unwrap(), count.iter().max().unwrap());
        check(hi - lo <= 1, || format!("class L{c} fold sizes {count:?}"))?;
    }

    // acva is exactly the mean of the fold accuracies
    let chunks: Vec<Chunk> = fixture_chunks()?.into_iter().filter(|c| c.split == Split::Exp).collect();
    let rows: Vec<Vec<f64>> = chunks.iter().map(|c| letter_profile(&c.sentences)).collect();
    let labels: Vec<String> = chunks.iter().map(|c| c.label.clone()).collect();
    let x = DenseMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
    let ids: Vec<(String, String)> = chunks.iter().map(|c| (c.chunk_id.clone(), c.label.clone())).collect();
    let fa = evalkit::stratified_folds(&ids, 10, 23).map_err(|e| e.to_string())?;
    let idx = fa.fold_indices(&chunks.iter().map(|c| c.chunk_id.clone()).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::default();
    let out = evalkit::cross_validate(&x, &labels, &idx, 10, &cfg).map_err(|e| e.to_string())?;
    let mut sum = 0.0;
    for a in &out.per_fold {
        sum += a;
    }
    check(out.per_fold.len() == 10 && out.acva == sum / 10.0, || {
        format!("acva {} vs mean {}", out.acva, sum / 10.0)
    })?;

    // training featurization never touches a held-out chunk
    let trained = std::sync::Mutex::new(BTreeSet::new());
    let sliced = std::sync::Mutex::new(BTreeSet::new());
    let report = evalkit::length_sensitivity(
        "letters",
        &chunks,
        |c, p| {
            match p {
                None => trained.lock().unwrap().insert(c.chunk_id.clone()),
                Some(_) => sliced.lock().unwrap().insert(c.chunk_id.clone()),
            };
            Ok(letter_profile(evalkit::slice_sentences(&c.sentences, p.unwrap_or(100))))
        },
        &evalkit::LENGTH_PERCENTS,
        100,
        29,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let trained = trained.into_inner().unwrap();
    let sliced = sliced.into_inner().unwrap();
    let held: BTreeSet<String> = report.holdout_ids.iter().cloned().collect();
    check(held.len() == 100 && sliced == held, || format!("{} held-out ids", held.len()))?;
    check(trained.is_disjoint(&held), || "a held-out chunk was used in training".into())?;
    check(trained.len() + held.len() == chunks.len(), || "training set is not the complement".into())?;

    // p=80 vs p=10 through the command line on the fixture
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = config_copy(tmp.path(), |_| {});
    let c = cfg_path.to_str().unwrap();
    for stage in ["prepare", "features", "length-sense"] {
        nli_ok(&[stage, "-c", c]);
    }
    let lr = read_json(&tmp.path().join("out/length/linguistic.json"));
    let acc = &lr["result"]["accuracy"];
    let (a10, a80) = (acc["10"].as_f64().unwrap(), acc["80"].as_f64().unwrap());
    let holdout_lines = std::fs::read_to_string(tmp.path().join("out/length/holdout.jsonl")).unwrap();
    check(holdout_lines.lines().count() == 100, || "holdout.jsonl is not 100 lines".into())?;
    check(a80 >= a10, || format!("p=80 accuracy {a80} below p=10 accuracy {a10}"))?;
    Ok(format!(
        "folds balanced; acva == mean; holdout disjoint; linguistic p10 {a10:.2} <= p80 {a80:.2}"
    ))
}

// ---------------------------------------------------------------- 8

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

struct EndToEnd {
    _tmp: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn run_pipeline(root: &Path, emb: &Path) -> PathBuf {
    let emb_s = |f: &str| Value::String(emb.join(f).display().to_string());
    let cfg = config_copy(root, |v| {
        v["feature_set"] = Value::String("both".into());
        v["paths"]["embeddings"] = serde_json::json!({
            "finetuned": { "path": emb_s("finetuned.jsonl") },
            "pretrained": { "path": emb_s("pretrained.jsonl") },
        });
        v["paths"]["slice_embeddings"] = serde_json::json!({
            "finetuned": emb_s("finetuned.slices.jsonl"),
            "pretrained": emb_s("pretrained.slices.jsonl"),
        });
    });
    let c = cfg.to_str().unwrap().to_string();
    for stage in ["prepare", "features", "embed-import", "cv"] {
        nli_ok(&[stage, "-c", &c]);
    }
    cfg
}

fn end_to_end(keep: &mut Option<EndToEnd>) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    // embeddings come from the chunk ids the prepare stage will produce
    let store = tmp.path().join("store.jsonl");
    corpus::write_chunks(&store, &fixture_chunks()?).map_err(|e| e.to_string())?;
    let emb = tmp.path().join("emb");
    nli_ok(&["synth-embeddings", "--chunks", store.to_str().unwrap(), "--out", emb.to_str().unwrap()]);

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let cfg_a = run_pipeline(&a, &emb);
    run_pipeline(&b, &emb);

    let store_cli = std::fs::read(a.join("out/prepare/chunks.jsonl")).unwrap();
    check(store_cli == std::fs::read(&store).unwrap(), || "chunk store differs from library prepare".into())?;
    let acva = |m: &str| -> (f64, usize) {
        let v = read_json(&a.join(format!("out/cv/{m}.json")));
        let r = &v["result"];
        (r["acva"].as_f64().unwrap(), r["per_fold"].as_array().unwrap().len())
    };
    let (ling, ling_folds) = acva("linguistic");
    let (tuned, tuned_folds) = acva("finetuned");
    check(ling_folds == 10 && tuned_folds == 10, || "per_fold length is not 10".into())?;
    check(ling >= 0.80, || format!("linguistic CV accuracy {ling:.3} below 0.80"))?;
    check(tuned >= 0.90, || format!("embedding CV accuracy {tuned:.3} below 0.90"))?;

    let fa = files_under(&a.join("out"));
    let fb = files_under(&b.join("out"));
    let differing: Vec<_> = fa
        .iter()
        .filter(|(p, body)| fb.get(*p) != Some(body))
        .map(|(p, _)| p.display().to_string())
        .collect();
    check(fa.len() == fb.len() && differing.is_empty(), || {
        format!("reruns differ in {differing:?} ({} vs {} files)", fa.len(), fb.len())
    })?;
    let n_files = fa.len();
    *keep = Some(EndToEnd {
        _tmp: tmp,
        config: cfg_a,
        out: a.join("out"),
    });
    Ok(format!(
        "linguistic acva {ling:.3}, embedding acva {tuned:.3}; {n_files} files byte-identical across reruns"
    ))
}

// ---------------------------------------------------------------- 9

fn check_table(table: &str, expect_rows: usize) -> Result<(), String> {
    let lines: Vec<&str> = table.lines().collect();
    let cells = |l: &str| -> Vec<String> { l.split('|').map(|c| c.trim().to_string()).collect() };
    check(cells(lines[0]) == ["MODEL", "DUR", "ACVA", "OOSA"], || format!("header `{}`", lines[0]))?;
    check(lines.len() == expect_rows + 1, || format!("{} table lines", lines.len()))?;
    let three_decimals = |s: &str| {
        let (int, frac) = s.split_once('.').unwrap_or(("x", ""));
        (int.is_empty() || int == "1") && frac.len() == 3 && frac.chars().all(|c| c.is_ascii_digit())
    };
    for l in &lines[1..] {
        let c = cells(l);
        check(c.len() == 4 && three_decimals(&c[2]), || format!("row `{l}`"))?;
        check(c[3] == "-" || three_decimals(&c[3]), || format!("OOSA cell in `{l}`"))?;
    }
    Ok(())
}

fn report_shape(e2e: Option<&EndToEnd>) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reports = vec![
        EvalReport {
            model_name: "with-oos".into(),
            duration_hours: 1.5,
            acva: 0.475,
            oosa: Some(0.637),
            per_fold: vec![0.475; 10],
        },
        EvalReport {
            model_name: "without-oos".into(),
            duration_hours: 0.0,
            acva: 0.654,
            oosa: None,
            per_fold: vec![0.654; 10],
        },
    ];
    let series: Vec<LengthReport> = ["with-oos", "without-oos"]
        .iter()
        .map(|m| LengthReport {
            model_name: m.to_string(),
            holdout_ids: vec![],
            accuracy: evalkit::LENGTH_PERCENTS.iter().map(|&p| (p, f64::from(p) / 100.0)).collect(),
        })
        .collect();
    evalkit::emit_report(&reports, &series, tmp.path(), "hash").map_err(|e| e.to_string())?;
    let table = std::fs::read_to_string(tmp.path().join("table.txt")).unwrap();
    check_table(&table, 2)?;
    check(table.contains(".475") && table.contains(".637"), || "3-decimal cells missing".into())?;
    check(table.lines().nth(2).unwrap().trim_end().ends_with('-'), || "absent OOSA is not `-`".into())?;
    let tsv = std::fs::read_to_string(tmp.path().join("length.tsv")).unwrap();
    check(tsv.lines().next() == Some("percent\tmodel\taccuracy") && tsv.lines().count() == 1 + 2 * 4, || {
        format!("length TSV has {} lines", tsv.lines().count())
    })?;

    // the same shape from the command line on the pipeline run
    let e2e = e2e.ok_or("end-to-end run unavailable")?;
    let c = e2e.config.to_str().unwrap();
    nli_ok(&["length-sense", "-c", c]);
    nli_ok(&["report", "-c", c]);
    let table = std::fs::read_to_string(e2e.out.join("report/table.txt")).unwrap();
    check_table(&table, 3)?;
    let tsv = std::fs::read_to_string(e2e.out.join("report/length.tsv")).unwrap();
    let mut pairs = BTreeSet::new();
    for l in tsv.lines().skip(1) {
        let f: Vec<&str> = l.split('\t').collect();
        check(f.len() == 3 && pairs.insert((f[1].to_string(), f[0].to_string())), || format!("TSV row `{l}`"))?;
    }
    check(pairs.len() == 3 * 4, || format!("{} (model, percent) rows", pairs.len()))?;
    Ok("MODEL/DUR/ACVA/OOSA with `-` cells; one TSV row per (model, percent)".into())
}

// ----------------------------------------------------------------

fn main() {
    let mut e2e = None;
    let mut failures = 0;
    let mut run = |n: u32, name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > budget => Err(format!("{detail}; took {took:.1?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS [{n}] {name} ({:.1}s): {detail}", took.as_secs_f64()),
            Err(why) => {
                failures += 1;
                println!("FAIL [{n}] {name} ({:.1}s): {why}", took.as_secs_f64());
            }
        }
    };
    let s = Duration::from_secs;
    run(1, "feature-schema arithmetic", s(10), &mut schema_arithmetic);
    run(2, "edit-distance oracle", s(5), &mut edit_distance_oracle);
    run(3, "spelling-lookup oracle", s(10), &mut spelling_oracle);
    run(4, "classifier numerics", s(30), &mut classifier_numerics);
    run(5, "Ward oracle", s(10), &mut ward_oracle);
    run(6, "PCA properties", s(5), &mut pca_properties);
    run(7, "evaluation-protocol invariants", s(120), &mut protocol_invariants);
    run(8, "end-to-end smoke", s(120), &mut || end_to_end(&mut e2e));
    run(9, "report shape", s(60), &mut || report_shape(e2e.as_ref()));
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
