use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::evaluation::{rank_classes, ScenePrediction};
use crate::knowledge::{KnowledgeGraph, Vocab};
use crate::scene::SceneSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedSegment {
    pub id: u32,
    pub class: usize,
    pub class_name: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedTriplet {
    pub subject_id: u32,
    pub object_id: u32,
    pub subject_class: String,
    pub object_class: String,
    pub predicate: usize,
    pub predicate_name: String,
    pub probability: f64,
}

/// Contents of the file written by `predict`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub vocab: String,
    pub segments: Vec<PredictedSegment>,
    pub triplets: Vec<PredictedTriplet>,
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl PredictionFile {
    pub fn new(scene: &SceneSample, pred: &ScenePrediction, vocab: &Vocab) -> Self {
        let segments = scene
            .segments
            .iter()
            .enumerate()
            .map(|(i, seg)| {
                let row: Vec<f64> = (0..pred.object_logits.cols()).map(|j| pred.object_logits.get(i, j)).collect();
                let class = rank_classes(&row)[0];
                PredictedSegment {
                    id: seg.id,
                    class,
                    class_name: vocab.objects()[class].clone(),
                    probability: softmax_row(&row)[class],
                }
            })
            .collect();
        let mut triplets = Vec::new();
        for t in &pred.triplets {
            for &p in &t.predicates {
                triplets.push(PredictedTriplet {
                    subject_id: t.subject_id,
                    object_id: t.object_id,
                    subject_class: vocab.objects()[t.subject_class].clone(),
                    object_class: vocab.objects()[t.object_class].clone(),
                    predicate: p,
                    predicate_name: vocab.predicates()[p].clone(),
                    probability: t.scores[p],
                });
            }
        }
        PredictionFile { vocab: vocab.name.clone(), segments, triplets }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Directed graph with one node per segment and one labelled edge per
/// predicted triplet.
pub fn to_dot(file: &PredictionFile) -> String {
    let mut s = String::from("digraph scene {\n");
    for seg in &file.segments {
        let _ = writeln!(s, "  n{} [label={}];", seg.id, quote(&format!("{} ({})", seg.class_name, seg.id)));
    }
    for t in &file.triplets {
        let _ = writeln!(s, "  n{} -> n{} [label={}];", t.subject_id, t.object_id, quote(&t.predicate_name));
    }
    s.push_str("}\n");
    s
}

pub fn kg_summary(kg: &KnowledgeGraph) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "vocabulary {}: {} object classes, {} predicate classes, {:?} mode",
        kg.vocab.name,
        kg.vocab.n_objects(),
        kg.vocab.n_predicates(),
        kg.mode
    );
    let _ = writeln!(
        s,
        "embeddings: objects {:?}, predicates {:?}",
        kg.object_embeddings.shape(),
        kg.predicate_embeddings.shape()
    );
    let _ = writeln!(s, "{:<22} {:>9} {:>8} {:>8} {:>9} symmetric", "matrix", "shape", "min", "max", "nonzero");
    for m in &kg.matrices {
        let w = &m.weights;
        let v = w.values();
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let nnz = v.iter().filter(|x| **x != 0.0).count();
        let symmetric = w.rows() == w.cols()
            && (0..w.rows()).all(|i| (0..w.cols()).all(|j| w.get(i, j) == w.get(j, i)));
        let shape = format!("{}x{}", w.rows(), w.cols());
        let (min, max) = if v.is_empty() { (0.0, 0.0) } else { (min, max) };
        let _ = writeln!(s, "{:<22} {:>9} {:>8.4} {:>8.4} {:>9} {}", m.name(), shape, min, max, nnz, symmetric);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_escapes_labels() {
        let file = PredictionFile {
            vocab: "v".into(),
            segments: vec![PredictedSegment { id: 3, class: 0, class_name: "a\"b".into(), probability: 1.0 }],
            triplets: vec![PredictedTriplet {
                subject_id: 3,
                object_id: 3,
                subject_class: "a".into(),
                object_class: "a".into(),
                predicate: 0,
                predicate_name: "on".into(),
                probability: 0.9,
            }],
        };
        let dot = to_dot(&file);
        assert!(dot.starts_with("digraph scene {\n") && dot.ends_with("}\n"));
        assert!(dot.contains(r#"n3 [label="a\"b (3)"];"#), "{dot}");
        assert!(dot.contains(r#"n3 -> n3 [label="on"];"#));
    }
}
