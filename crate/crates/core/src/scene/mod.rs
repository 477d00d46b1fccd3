//! Segmented scenes, their geometric descriptors and relation graphs.

mod context;
mod graph;
mod io;
mod synth;

pub use context::{contextual_vector, union_segment, Aabb, ContextVector, CONTEXT_DIM};
pub use graph::{build_sr_graph, SrGraph, DEFAULT_THRESHOLD};
pub use io::{load_scene, parse_scene, save_scene, scene_to_string};
pub use synth::{generate_synthetic_corpus, ObjectClass, Placement, SynthSpec};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::Vocab;

pub type Point = [f64; 3];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("segment {0} has no points")]
    EmptySegment(u32),
    #[error("segment {0} has a non-finite coordinate")]
    NonFinite(u32),
    #[error("degenerate scene: {0}")]
    DegenerateScene(String),
    #[error("{path}: parse error at line {line}, column {column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{path}: invalid field `{field}`: {msg}")]
    Invalid {
        path: String,
        field: String,
        msg: String,
    },
    #[error("unknown vocabulary `{0}`")]
    UnknownVocab(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// One class-agnostic point cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u32,
    pub points: Vec<Point>,
    #[serde(default)]
    pub gt_class: Option<usize>,
}

impl Segment {
    pub fn new(id: u32, points: Vec<Point>, gt_class: Option<usize>) -> Result<Self, SceneError> {
        let s = Segment { id, points, gt_class };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.points.is_empty() {
            return Err(SceneError::EmptySegment(self.id));
        }
        if self.points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(SceneError::NonFinite(self.id));
        }
        Ok(())
    }
}

/// A ground-truth relationship between two segments, by segment id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct Triplet {
    pub subject: u32,
    pub predicate: usize,
    pub object: u32,
}

impl From<[u32; 3]> for Triplet {
    fn from(v: [u32; 3]) -> Self {
        Triplet { subject: v[0], predicate: v[1] as usize, object: v[2] }
    }
}

impl From<Triplet> for [u32; 3] {
    fn from(t: Triplet) -> Self {
        [t.subject, t.predicate as u32, t.object]
    }
}

/// A scene's segments and relationship annotations; the unit of training
/// and evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub vocab: String,
    pub segments: Vec<Segment>,
    pub gt_triplets: Vec<Triplet>,
}

impl SceneSample {
    pub fn new(
        vocab: impl Into<String>,
        segments: Vec<Segment>,
        gt_triplets: Vec<Triplet>,
    ) -> Result<Self, SceneError> {
        let s = SceneSample { vocab: vocab.into(), segments, gt_triplets };
        s.validate_structure("<memory>")?;
        Ok(s)
    }

    /// Checks segment and triplet invariants, naming offending fields
    /// relative to `origin`.
    pub(crate) fn validate_structure(&self, origin: &str) -> Result<(), SceneError> {
        if self.segments.is_empty() {
            return Err(SceneError::DegenerateScene(format!("{origin}: no segments")));
        }
        let invalid = |field: String, msg: &str| SceneError::Invalid {
            path: origin.to_string(),
            field,
            msg: msg.to_string(),
        };
        let mut ids = HashSet::new();
        for (k, seg) in self.segments.iter().enumerate() {
            if !ids.insert(seg.id) {
                return Err(invalid(format!("segments[{k}].id"), "duplicate segment id"));
            }
            match seg.validate() {
                Ok(()) => {}
                Err(SceneError::EmptySegment(_)) => {
                    return Err(invalid(format!("segments[{k}].points"), "empty point list"))
                }
                Err(_) => return Err(invalid(format!("segments[{k}].points"), "non-finite coordinate")),
            }
        }
        let mut seen = HashSet::new();
        for (k, t) in self.gt_triplets.iter().enumerate() {
            if !ids.contains(&t.subject) {
                return Err(invalid(format!("gt_triplets[{k}]"), "subject references a missing segment"));
            }
            if !ids.contains(&t.object) {
                return Err(invalid(format!("gt_triplets[{k}]"), "object references a missing segment"));
            }
            if t.subject == t.object {
                return Err(invalid(format!("gt_triplets[{k}]"), "subject equals object"));
            }
            if !seen.insert(*t) {
                return Err(invalid(format!("gt_triplets[{k}]"), "duplicate triplet"));
            }
        }
        Ok(())
    }

    /// Checks class and predicate indices against `vocab`.
    pub fn validate_vocab(&self, vocab: &Vocab, origin: &str) -> Result<(), SceneError> {
        if self.vocab != vocab.name {
            return Err(SceneError::UnknownVocab(self.vocab.clone()));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            if let Some(c) = seg.gt_class {
                if c >= vocab.n_objects() {
                    return Err(SceneError::Invalid {
                        path: origin.to_string(),
                        field: format!("segments[{k}].gt_class"),
                        msg: format!("class {c} outside vocabulary of {}", vocab.n_objects()),
                    });
                }
            }
        }
        for (k, t) in self.gt_triplets.iter().enumerate() {
            if t.predicate >= vocab.n_predicates() {
                return Err(SceneError::Invalid {
                    path: origin.to_string(),
                    field: format!("gt_triplets[{k}]"),
                    msg: format!("predicate {} outside vocabulary of {}", t.predicate, vocab.n_predicates()),
                });
            }
        }
        Ok(())
    }

    pub fn segment_index(&self, id: u32) -> Option<usize> {
        self.segments.iter().position(|s| s.id == id)
    }

    pub fn id_to_index(&self) -> HashMap<u32, usize> {
        self.segments.iter().enumerate().map(|(i, s)| (s.id, i)).collect()
    }

    /// Ground-truth predicate sets per ordered pair of segment indices.
    pub fn gt_pairs(&self) -> BTreeMap<(usize, usize), BTreeSet<usize>> {
        let index = self.id_to_index();
        let mut out: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for t in &self.gt_triplets {
            out.entry((index[&t.subject], index[&t.object]))
                .or_default()
                .insert(t.predicate);
        }
        out
    }

    pub fn gt_classes(&self) -> Vec<Option<usize>> {
        self.segments.iter().map(|s| s.gt_class).collect()
    }
}
