//! Multinomial logistic regression with an L2 penalty, trained by L-BFGS.
//!
//! Objective over W (K x d) and b (K):
//!
//!   J = 0.5 * |W|^2 + C * sum_i -log softmax(W x_i + b)[y_i]
//!
//! The bias is not penalized. Rows are processed in fixed-size blocks that
//! may run in parallel; block results are summed in block order, so the
//! objective is bitwise identical regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_BLOCK: usize = 128;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Shape(format!("ragged rows: {} vs {cols}", r.len())));
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub lbfgs_memory: usize,
    #[serde(default)]
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            max_iter: 1000,
            tol: 1e-4,
            lbfgs_memory: 10,
            standardize: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.lbfgs_memory == 0 {
            return Err(Error::Config("lbfgs_memory must be at least 1".into()));
        }
        Ok(())
    }
}

fn log_softmax_row(logits: &mut [f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|z| (z - m).exp()).sum();
    m + s.ln()
}

fn logits_into(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (k, o) in out.iter_mut().enumerate() {
        let wk = &w[k * d..(k + 1) * d];
        *o = b[k] + wk.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// Loss and gradients of the data term over rows `lo..hi`, unscaled by C.
fn block_terms(w: &[f64], b: &[f64], x: &DenseMatrix, y: &[usize], lo: usize, hi: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let (k, d) = (b.len(), x.cols);
    let mut loss = 0.0;
    let mut gw = vec![0.0; k * d];
    let mut gb = vec![0.0; k];
    let mut z = vec![0.0; k];
    for i in lo..hi {
        let xi = x.row(i);
        logits_into(w, b, xi, &mut z);
        let lse = log_softmax_row(&mut z);
        loss += lse - z[y[i]];
        for c in 0..k {
            let r = (z[c] - lse).exp() - f64::from(u8::from(c == y[i]));
            gb[c] += r;
            if r != 0.0 {
                let g = &mut gw[c * d..(c + 1) * d];
                for (gj, xj) in g.iter_mut().zip(xi) {
                    *gj += r * xj;
                }
            }
        }
    }
    (loss, gw, gb)
}

/// Objective value and gradients with respect to W (row-major K x d) and b.
pub fn loss_and_grad(
    w: &[f64],
    b: &[f64],
    x: &DenseMatrix,
    y: &[usize],
    c: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let k = b.len();
    if w.len() != k * x.cols || y.len() != x.rows {
        return Err(Error::Shape(format!(
            "W has {} entries for {k} classes x {} features; {} labels for {} rows",
            w.len(),
            x.cols,
            y.len(),
            x.rows
        )));
    }
    if let Some(&bad) = y.iter().find(|&&v| v >= k) {
        return Err(Error::Shape(format!("label index {bad} outside 0..{k}")));
    }
    if w.iter().chain(b).chain(&x.data).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in weights or features".into()));
    }
    Ok(objective(w, b, x, y, c))
}

fn objective(w: &[f64], b: &[f64], x: &DenseMatrix, y: &[usize], c: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let n_blocks = x.rows.div_ceil(ROW_BLOCK);
    let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n_blocks)
        .into_par_iter()
        .map(|bi| block_terms(w, b, x, y, bi * ROW_BLOCK, ((bi + 1) * ROW_BLOCK).min(x.rows)))
        .collect();
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; b.len()];
    for (l, pw, pb) in parts {
        loss += l;
        for (a, v) in gw.iter_mut().zip(&pw) {
            *a += v;
        }
        for (a, v) in gb.iter_mut().zip(&pb) {
            *a += v;
        }
    }
    let penalty = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wv) in gw.iter_mut().zip(w) {
        *g = c * *g + wv;
    }
    for g in gb.iter_mut() {
        *g *= c;
    }
    (penalty + c * loss, gw, gb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimStatus {
    Converged,
    MaxIter,
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub status: OptimStatus,
    /// Objective at the start and after every accepted iteration.
    pub history: Vec<f64>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 50;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Point {
    a: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

/// Cubic minimizer of the interpolant through two points with slopes,
/// kept away from the interval ends; bisection when the cubic is unusable.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a0, a1) = (lo.a, hi.a);
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a0 - a1);
    let disc = d1 * d1 - lo.dphi * hi.dphi;
    let mid = 0.5 * (a0 + a1);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let a = a1 - (a1 - a0) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
    let (l, h) = (a0.min(a1), a0.max(a1));
    let margin = 0.1 * (h - l);
    if a.is_finite() && a >= l + margin && a <= h - margin {
        a
    } else {
        mid
    }
}

/// Strong-Wolfe line search (bracketing followed by zoom).
fn line_search<F>(f: &mut F, x: &[f64], fx: f64, gx: &[f64], dir: &[f64], a_init: f64) -> Option<Point>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let dphi0 = dot(gx, dir);
    let mut trial = vec![0.0; x.len()];
    let mut eval = |a: f64| -> Point {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(dir) {
            *t = xi + a * di;
        }
        let (fa, ga) = f(&trial);
        let dphi = dot(&ga, dir);
        Point { a, f: fa, g: ga, dphi }
    };
    let armijo = |p: &Point| p.f <= fx + C1 * p.a * dphi0;
    let curvature = |p: &Point| p.dphi.abs() <= -C2 * dphi0;

    let mut prev = Point {
        a: 0.0,
        f: fx,
        g: gx.to_vec(),
        dphi: dphi0,
    };
    let mut a = a_init;
    let mut evals = 0;
    let (mut lo, mut hi);
    loop {
        let p = eval(a);
        evals += 1;
        if !armijo(&p) || (evals > 1 && p.f >= prev.f) {
            lo = prev;
            hi = p;
            break;
        }
        if curvature(&p) {
            return Some(p);
        }
        if p.dphi >= 0.0 {
            lo = p;
            hi = prev;
            break;
        }
        if evals >= MAX_LINE_EVALS {
            return None;
        }
        a *= 2.0;
        prev = p;
    }
    while evals < MAX_LINE_EVALS {
        if (hi.a - lo.a).abs() <= f64::EPSILON * lo.a.abs().max(1e-300) {
            break;
        }
        let p = eval(interpolate(&lo, &hi));
        evals += 1;
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if curvature(&p) {
                return Some(p);
            }
            if p.dphi * (hi.a - lo.a) >= 0.0 {
                hi = std::mem::replace(&mut lo, p);
            } else {
                lo = p;
            }
        }
    }
    None
}

/// L-BFGS with the two-loop recursion. Stops when the largest gradient
/// component is at most `tol`.
pub fn lbfgs_minimize<F>(mut f: F, x0: Vec<f64>, cfg: LbfgsConfig) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut history = vec![fx];
    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(cfg.memory);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(cfg.memory);
    let mut rho: Vec<f64> = Vec::with_capacity(cfg.memory);
    let done = |x: Vec<f64>, f: f64, it: usize, status, history| LbfgsResult {
        x,
        f,
        iterations: it,
        status,
        history,
    };
    if max_abs(&g) <= cfg.tol {
        return done(x, fx, 0, OptimStatus::Converged, history);
    }
    for it in 0..cfg.max_iter {
        // two-loop recursion: dir = -H g
        let mut q = g.clone();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = rho[i] * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if m > 0 {
            let gamma = dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..m {
            let beta = rho[i] * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut a_init = 1.0;
        if m == 0 || dot(&dir, &g) >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            dir = g.iter().map(|v| -v).collect();
            a_init = (1.0 / dot(&g, &g).sqrt()).min(1.0);
        }

        let Some(p) = line_search(&mut f, &x, fx, &g, &dir, a_init) else {
            return done(x, fx, it, OptimStatus::LineSearchFailed, history);
        };
        let s: Vec<f64> = dir.iter().map(|d| p.a * d).collect();
        let yv: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        fx = p.f;
        g = p.g;
        history.push(fx);
        let sy = dot(&s, &yv);
        if sy > 1e-10 * dot(&yv, &yv) {
            if s_hist.len() == cfg.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
            rho.push(1.0 / sy);
        }
        if max_abs(&g) <= cfg.tol {
            return done(x, fx, it + 1, OptimStatus::Converged, history);
        }
    }
    done(x, fx, cfg.max_iter, OptimStatus::MaxIter, history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &DenseMatrix) -> Self {
        let n = x.rows.max(1) as f64;
        let mut mean = vec![0.0; x.cols];
        for i in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols];
        for i in 0..x.rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, scale }
    }

    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = x.clone();
        for row in out.data.chunks_mut(x.cols.max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_samples: usize,
    pub iterations: usize,
    pub status: OptimStatus,
    pub final_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub class_order: Vec<String>,
    pub d: usize,
    /// Row-major, one row of `d` weights per class.
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub config: TrainConfig,
    pub training_meta: TrainingMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<Scaler>,
}

/// Fits the model from zero initialization. The class order is the sorted
/// set of labels present in `labels`.
pub fn train(x: &DenseMatrix, labels: &[String], config: &TrainConfig) -> Result<LogRegModel> {
    config.validate()?;
    if labels.len() != x.rows {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), x.rows)));
    }
    let mut class_order: Vec<String> = labels.to_vec();
    class_order.sort();
    class_order.dedup();
    if class_order.len() < 2 {
        return Err(Error::Validation(format!(
            "training needs at least two classes, found {}",
            class_order.len()
        )));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feature value".into()));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| class_order.binary_search(l).expect("label in class order"))
        .collect();
    let scaler = config.standardize.then(|| Scaler::fit(x));
    let scaled;
    let xs = match &scaler {
        Some(s) => {
            scaled = s.apply(x);
            &scaled
        }
        None => x,
    };
    let (k, d) = (class_order.len(), x.cols);
    let c = config.c;
    let result = lbfgs_minimize(
        |theta| {
            let (w, b) = theta.split_at(k * d);
            let (f, mut gw, gb) = objective(w, b, xs, &y, c);
            gw.extend(gb);
            (f, gw)
        },
        vec![0.0; k * d + k],
        LbfgsConfig {
            memory: config.lbfgs_memory,
            tol: config.tol,
            max_iter: config.max_iter,
        },
    );
    if !result.f.is_finite() {
        return Err(Error::Numeric("objective diverged".into()));
    }
    if result.status != OptimStatus::Converged {
        log::warn!(
            "L-BFGS stopped with status {:?} after {} iterations",
            result.status,
            result.iterations
        );
    }
    let mut w = result.x;
    let b = w.split_off(k * d);
    Ok(LogRegModel {
        class_order,
        d,
        w,
        b,
        config: *config,
        training_meta: TrainingMeta {
            n_samples: x.rows,
            iterations: result.iterations,
            status: result.status,
            final_objective: result.f,
        },
        scaler,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<String>,
    /// One row per sample, columns in `class_order`.
    pub probabilities: Vec<Vec<f64>>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &LogRegModel, x: &DenseMatrix) -> Result<Predictions> {
    if x.cols != model.d {
        return Err(Error::Shape(format!(
            "model expects {} features, input has {}",
            model.d, x.cols
        )));
    }
    let scaled;
    let xs = match &model.scaler {
        Some(s) => {
            scaled = s.apply(x);
            &scaled
        }
        None => x,
    };
    let k = model.class_order.len();
    let probabilities: Vec<Vec<f64>> = (0..xs.rows)
        .into_par_iter()
        .map(|i| {
            let mut z = vec![0.0; k];
            logits_into(&model.w, &model.b, xs.row(i), &mut z);
            softmax(&z)
        })
        .collect();
    let labels = probabilities
        .iter()
        .map(|p| model.class_order[argmax(p)].clone())
        .collect();
    Ok(Predictions {
        labels,
        probabilities,
    })
}

pub fn accuracy(predicted: &[String], truth: &[String]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

impl LogRegModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: LogRegModel = serde_json::from_str(text)?;
        if m.w.len() != m.class_order.len() * m.d || m.b.len() != m.class_order.len() {
            return Err(Error::Shape("model weights do not match class count and dimension".into()));
        }
        Ok(m)
    }
}
