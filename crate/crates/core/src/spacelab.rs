//! Embedding-space analysis: label centroids, Ward clustering and a 2-D
//! PCA projection, with Newick, TSV and SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean vector per label, labels ascending.
pub fn centroids(by_label: &BTreeMap<String, Vec<Vec<f64>>>) -> Result<Vec<(String, Vec<f64>)>> {
    by_label
        .iter()
        .map(|(label, vs)| {
            let first = vs
                .first()
                .ok_or_else(|| Error::Validation(format!("label `{label}` has no vectors")))?;
            let mut sum = vec![0.0; first.len()];
            for v in vs {
                if v.len() != sum.len() {
                    return Err(Error::Shape(format!("label `{label}` mixes vector lengths")));
                }
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
            let n = vs.len() as f64;
            Ok((label.clone(), sum.into_iter().map(|s| s / n).collect()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageRow {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Agglomerative clustering with Ward's criterion. Original points are
/// clusters `0..n`; merge `m` creates cluster `n + m`. Squared distances are
/// updated with the Lance–Williams recurrence and reported as their square
/// root. Equal distances go to the pair with the smallest (left, right) ids.
pub fn ward_linkage(points: &[Vec<f64>]) -> Result<Vec<LinkageRow>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Validation(format!("clustering needs at least 2 points, got {n}")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite coordinate".into()));
    }
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(&points[i], &points[j]);
            d2[i * n + j] = v;
            d2[j * n + i] = v;
        }
    }
    // slot -> (cluster id, size); None once absorbed
    let mut slots: Vec<Option<(usize, usize)>> = (0..n).map(|i| Some((i, 1))).collect();
    let mut rows = Vec::with_capacity(n - 1);
    for m in 0..n - 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..n {
            let Some((ida, _)) = slots[a] else { continue };
            for b in a + 1..n {
                let Some((idb, _)) = slots[b] else { continue };
                let v = d2[a * n + b];
                let key = (ida.min(idb), ida.max(idb));
                let better = match best {
                    None => true,
                    Some((bv, bk, _, _)) => v < bv || (v == bv && key < bk),
                };
                if better {
                    best = Some((v, key, a, b));
                }
            }
        }
        let (v, (left, right), a, b) = best.expect("at least two active clusters");
        let (na, nb) = (slots[a].unwrap().1, slots[b].unwrap().1);
        for k in 0..n {
            let Some((_, nk)) = slots[k] else { continue };
            if k == a || k == b {
                continue;
            }
            let (fa, fb, fk) = (na as f64, nb as f64, nk as f64);
            let nv = ((fa + fk) * d2[a * n + k] + (fb + fk) * d2[b * n + k] - fk * v) / (fa + fb + fk);
            d2[a * n + k] = nv;
            d2[k * n + a] = nv;
        }
        slots[a] = Some((n + m, na + nb));
        slots[b] = None;
        rows.push(LinkageRow {
            left,
            right,
            height: v.max(0.0).sqrt(),
            size: na + nb,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub coords: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    pub explained_variance_ratio: [f64; 2],
}

/// Projects the mean-centred points onto their top two right singular
/// directions. Each component's largest-magnitude entry is made positive.
pub fn pca_project(points: &[Vec<f64>]) -> Result<PcaProjection> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(Error::Validation(format!("PCA needs at least 2 points, got {n}")));
    }
    if d < 2 {
        return Err(Error::Validation("PCA to two dimensions needs at least 2 features".into()));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("points have different dimensions".into()));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let total: f64 = s.iter().map(|x| x * x).sum();

    let mut components: [Vec<f64>; 2] = [vec![0.0; d], vec![0.0; d]];
    let mut ratio = [0.0; 2];
    for (c, &idx) in order.iter().take(2).enumerate() {
        let mut row: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let lead = row
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > row[best].abs() { i } else { best });
        if row[lead] < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
        components[c] = row;
        ratio[c] = if total > 0.0 { s[idx] * s[idx] / total } else { 0.0 };
    }
    let coords = (0..n)
        .map(|i| {
            let r = centered.row(i);
            [0, 1].map(|c| r.iter().zip(&components[c]).map(|(a, b)| a * b).sum())
        })
        .collect();
    Ok(PcaProjection {
        coords,
        components,
        explained_variance_ratio: ratio,
    })
}

fn newick_name(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Newick tree with branch lengths equal to height differences.
pub fn to_newick(linkage: &[LinkageRow], labels: &[String]) -> Result<String> {
    let n = labels.len();
    if linkage.len() + 1 != n {
        return Err(Error::Shape(format!("{} merges for {n} leaves", linkage.len())));
    }
    let height = |id: usize| if id < n { 0.0 } else { linkage[id - n].height };
    fn node(id: usize, n: usize, linkage: &[LinkageRow], labels: &[String], out: &mut String, height: &dyn Fn(usize) -> f64) {
        if id < n {
            out.push_str(&newick_name(&labels[id]));
            return;
        }
        let row = &linkage[id - n];
        out.push('(');
        for (k, child) in [row.left, row.right].into_iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            node(child, n, linkage, labels, out, height);
            let _ = write!(out, ":{}", row.height - height(child));
        }
        out.push(')');
    }
    let mut out = String::new();
    node(2 * n - 2, n, linkage, labels, &mut out, &height);
    out.push_str(";\n");
    Ok(out)
}

/// Leaves in left-to-right drawing order.
fn leaf_order(linkage: &[LinkageRow], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut stack = vec![2 * n - 2];
    while let Some(id) = stack.pop() {
        if id < n {
            out.push(id);
        } else {
            stack.push(linkage[id - n].right);
            stack.push(linkage[id - n].left);
        }
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn dendrogram_svg(linkage: &[LinkageRow], labels: &[String]) -> String {
    let n = labels.len();
    let (w, h, margin, bottom) = (40.0 * n as f64 + 80.0, 420.0, 40.0, 120.0);
    let top = linkage.last().map_or(1.0, |r| r.height).max(f64::MIN_POSITIVE);
    let plot_h = h - margin - bottom;
    let y_of = |height: f64| margin + plot_h * (1.0 - height / top);
    let order = leaf_order(linkage, n);
    let mut x = vec![0.0; 2 * n - 1];
    let mut hgt = vec![0.0; 2 * n - 1];
    for (pos, &leaf) in order.iter().enumerate() {
        x[leaf] = margin + 20.0 + 40.0 * pos as f64;
    }
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (m, r) in linkage.iter().enumerate() {
        let id = n + m;
        x[id] = 0.5 * (x[r.left] + x[r.right]);
        hgt[id] = r.height;
        let (yl, yr, yt) = (y_of(hgt[r.left]), y_of(hgt[r.right]), y_of(r.height));
        let _ = writeln!(
            s,
            r#"<path d="M{:.2},{:.2} V{:.2} H{:.2} V{:.2}" fill="none" stroke="black"/>"#,
            x[r.left], yl, yt, x[r.right], yr
        );
    }
    for &leaf in &order {
        let _ = writeln!(
            s,
            r#"<text transform="translate({:.2},{:.2}) rotate(60)">{}</text>"#,
            x[leaf] - 3.0,
            y_of(0.0) + 8.0,
            xml_escape(&labels[leaf])
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{:.2}" x2="{m}" y2="{:.2}" stroke="gray"/><text x="4" y="{:.2}">{top:.3}</text><text x="4" y="{:.2}">0</text>"#,
        y_of(0.0),
        y_of(top),
        y_of(top) + 4.0,
        y_of(0.0) + 4.0,
        m = margin - 6.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn pca_svg(proj: &PcaProjection, labels: &[String]) -> String {
    let (w, h, pad) = (640.0, 520.0, 60.0);
    let xs: Vec<f64> = proj.coords.iter().map(|c| c[0]).collect();
    let ys: Vec<f64> = proj.coords.iter().map(|c| c[1]).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let ((x0, x1), (y0, y1)) = (span(&xs), span(&ys));
    let px = |x: f64| pad + (w - 2.0 * pad) * (x - x0) / (x1 - x0);
    let py = |y: f64| h - pad - (h - 2.0 * pad) * (y - y0) / (y1 - y0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="{:.0}" text-anchor="middle">PC1 ({:.1}%)</text><text x="14" y="{:.0}" transform="rotate(-90 14 {:.0})" text-anchor="middle">PC2 ({:.1}%)</text>"#,
        w / 2.0,
        h - 16.0,
        100.0 * proj.explained_variance_ratio[0],
        h / 2.0,
        h / 2.0,
        100.0 * proj.explained_variance_ratio[1]
    );
    for (c, l) in proj.coords.iter().zip(labels) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            px(c[0]),
            py(c[1]),
            px(c[0]) + 6.0,
            py(c[1]) - 6.0,
            xml_escape(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn pca_tsv(proj: &PcaProjection, labels: &[String]) -> String {
    let mut s = String::from("label\tx\ty\n");
    for (c, l) in proj.coords.iter().zip(labels) {
        let _ = writeln!(s, "{l}\t{}\t{}", c[0], c[1]);
    }
    s
}

/// Writes linkage.json, dendrogram.nwk, dendrogram.svg, pca.tsv and pca.svg.
pub fn emit_analysis(linkage: &[LinkageRow], projection: &PcaProjection, labels: &[String], out_dir: &Path) -> Result<()> {
    if projection.coords.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} projected points for {} labels",
            projection.coords.len(),
            labels.len()
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let write = |name: &str, body: String| {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p.display().to_string(), e))
    };
    write("linkage.json", serde_json::to_string_pretty(linkage)? + "\n")?;
    write("dendrogram.nwk", to_newick(linkage, labels)?)?;
    write("dendrogram.svg", dendrogram_svg(linkage, labels))?;
    write("pca.tsv", pca_tsv(projection, labels))?;
    write("pca.svg", pca_svg(projection, labels))
}
