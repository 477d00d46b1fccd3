use std::fmt::Write as _;
use std::path::Path;

use super::{ClassKind, KnowledgeError, MatrixKind, TypedAdjacency, Vocab};
use crate::numeric::Tensor;

/// A loaded matrix plus the number of rows whose tokens were not in the
/// vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeList {
    pub adjacency: TypedAdjacency,
    pub skipped: usize,
}

fn names(vocab: &Vocab, kind: ClassKind) -> &[String] {
    match kind {
        ClassKind::Object => vocab.objects(),
        ClassKind::Predicate => vocab.predicates(),
    }
}

/// Parses tab-separated `source target weight` rows.
///
/// Duplicate pairs are summed, then the matrix is divided by its maximum so
/// weights lie in `[0, 1]`. Binary matrices keep 1 for every listed pair and
/// symmetric ones are symmetrized with the pairwise maximum first.
pub fn parse_edge_list(text: &str, origin: &str, kind: MatrixKind, vocab: &Vocab) -> Result<EdgeList, KnowledgeError> {
    let mut adjacency = TypedAdjacency::zeros(kind, vocab);
    let (src, tgt) = (names(vocab, kind.source()), names(vocab, kind.target()));
    let mut skipped = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let invalid = |msg: String| KnowledgeError::Validation {
            path: origin.to_string(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(invalid(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let weight: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| invalid(format!("weight `{}` is not a number", fields[2])))?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(invalid(format!("weight {weight} must be finite and non-negative")));
        }
        let (Some(i), Some(j)) = (
            src.iter().position(|n| n == fields[0].trim()),
            tgt.iter().position(|n| n == fields[1].trim()),
        ) else {
            skipped += 1;
            continue;
        };
        let w = &mut adjacency.weights;
        w.set(i, j, w.get(i, j) + weight);
    }

    let w = &mut adjacency.weights;
    if kind.is_binary() {
        for v in w.values_mut() {
            *v = if *v > 0.0 { 1.0 } else { 0.0 };
        }
    } else {
        if kind.is_symmetric() {
            let t = w.transpose();
            for (v, u) in w.values_mut().iter_mut().zip(t.values()) {
                *v = v.max(*u);
            }
        }
        let max = w.values().iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            for v in w.values_mut() {
                *v /= max;
            }
        }
    }
    Ok(EdgeList { adjacency, skipped })
}

pub fn load_edge_list(path: &Path, kind: MatrixKind, vocab: &Vocab) -> Result<EdgeList, KnowledgeError> {
    let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::io(path, e))?;
    parse_edge_list(&text, &path.display().to_string(), kind, vocab)
}

pub fn write_edge_list(path: &Path, rows: &[(String, String, f64)]) -> Result<(), KnowledgeError> {
    let mut out = String::new();
    for (s, t, w) in rows {
        writeln!(out, "{s}\t{t}\t{w}").expect("string write");
    }
    std::fs::write(path, out).map_err(|e| KnowledgeError::io(path, e))
}

/// Binary symmetric predicate matrix linking every distinct pair of
/// predicates that share a group. The diagonal stays 0.
pub fn build_category_matrix(vocab: &Vocab, groups: &[Vec<String>]) -> Result<TypedAdjacency, KnowledgeError> {
    let n = vocab.n_predicates();
    let mut weights = Tensor::zeros(&[n, n]);
    for group in groups {
        let idx = group
            .iter()
            .map(|name| {
                vocab.predicate_index(name).ok_or_else(|| {
                    KnowledgeError::Config(format!("category group names unknown predicate `{name}`"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        for &a in &idx {
            for &b in &idx {
                if a != b {
                    weights.set(a, b, 1.0);
                }
            }
        }
    }
    Ok(TypedAdjacency {
        kind: MatrixKind::Category,
        source_type: ClassKind::Predicate,
        target_type: ClassKind::Predicate,
        weights,
    })
}
