//! Character-level edit scripts between a misspelling and its correction.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One character substitution type. The variants make the field
/// invariants structural: inserts carry only the target character, deletes
/// only the source, replaces both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubstOp {
    Insert { to: char },
    Delete { from: char },
    Replace { from: char, to: char },
}

impl fmt::Display for SubstOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubstOp::Insert { to } => write!(f, "ins({to})"),
            SubstOp::Delete { from } => write!(f, "del({from})"),
            SubstOp::Replace { from, to } => write!(f, "rep({from}>{to})"),
        }
    }
}

/// An op anchored at a character index of the source word. For inserts the
/// index is the position before which the character goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionedOp {
    pub position: usize,
    pub op: SubstOp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditScript {
    pub distance: usize,
    pub ops: Vec<PositionedOp>,
}

impl EditScript {
    pub fn subst_ops(&self) -> impl Iterator<Item = SubstOp> + '_ {
        self.ops.iter().map(|p| p.op)
    }

    /// Applies the script to `source`.
    pub fn replay(&self, source: &str) -> String {
        let src: Vec<char> = source.chars().collect();
        let mut out = String::with_capacity(source.len() + self.ops.len());
        let mut cursor = 0;
        for p in &self.ops {
            out.extend(&src[cursor..p.position]);
            cursor = p.position;
            match p.op {
                SubstOp::Insert { to } => out.push(to),
                SubstOp::Delete { .. } => cursor += 1,
                SubstOp::Replace { to, .. } => {
                    out.push(to);
                    cursor += 1;
                }
            }
        }
        out.extend(&src[cursor..]);
        out
    }
}

/// Plain Levenshtein distance plus a backtraced script. At equal cost the
/// backtrace prefers match, then replace, then delete, then insert.
pub fn edit_ops(word: &str, correction: &str) -> EditScript {
    let a: Vec<char> = word.chars().collect();
    let b: Vec<char> = correction.chars().collect();
    let (m, n) = (a.len(), b.len());
    let w = n + 1;
    let mut d = vec![0usize; (m + 1) * w];
    for (i, row) in d.chunks_exact_mut(w).enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[..w].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub = d[(i - 1) * w + j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::new();
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] && here == d[(i - 1) * w + j - 1] {
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && here == d[(i - 1) * w + j - 1] + 1 {
            ops.push(PositionedOp {
                position: i - 1,
                op: SubstOp::Replace {
                    from: a[i - 1],
                    to: b[j - 1],
                },
            });
            i -= 1;
            j -= 1;
        } else if i > 0 && here == d[(i - 1) * w + j] + 1 {
            ops.push(PositionedOp {
                position: i - 1,
                op: SubstOp::Delete { from: a[i - 1] },
            });
            i -= 1;
        } else {
            ops.push(PositionedOp {
                position: i,
                op: SubstOp::Insert { to: b[j - 1] },
            });
            j -= 1;
        }
    }
    ops.reverse();
    EditScript {
        distance: d[m * w + n],
        ops,
    }
}
