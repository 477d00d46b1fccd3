//! Commonsense knowledge: vocabularies, word embeddings and the nine typed
//! adjacency matrices linking object and predicate classes.

mod derive;
mod edges;
mod embed;
mod vocab;

pub use derive::{default_category_groups, derive_edge_lists, synthetic_embeddings, synthetic_wup, write_kg_dir};
pub use edges::{build_category_matrix, load_edge_list, parse_edge_list, write_edge_list, EdgeList};
pub use embed::{label_embedding, load_embeddings, parse_embeddings, write_embeddings, Embeddings};
pub use vocab::{Vocab, VocabRegistry, SYNTHETIC_VOCAB};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::Tensor;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Validation { path: String, line: usize, msg: String },
    #[error("knowledge configuration: {0}")]
    Config(String),
    #[error("vocabulary: {0}")]
    Vocab(String),
}

impl KnowledgeError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        KnowledgeError::Io { path: path.to_path_buf(), source }
    }
}

/// Which vocabulary a matrix side indexes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Object,
    Predicate,
}

/// The nine knowledge matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    VgSubjectObject,
    VgObjectSubject,
    #[serde(rename = "conceptnet_relatedTo")]
    ConceptnetRelatedTo,
    VgSubPred,
    VgObjPred,
    VgPredSub,
    VgPredObj,
    Category,
    Wup,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 9] = [
        MatrixKind::VgSubjectObject,
        MatrixKind::VgObjectSubject,
        MatrixKind::ConceptnetRelatedTo,
        MatrixKind::VgSubPred,
        MatrixKind::VgObjPred,
        MatrixKind::VgPredSub,
        MatrixKind::VgPredObj,
        MatrixKind::Category,
        MatrixKind::Wup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::VgSubjectObject => "vg_subject_object",
            MatrixKind::VgObjectSubject => "vg_object_subject",
            MatrixKind::ConceptnetRelatedTo => "conceptnet_relatedTo",
            MatrixKind::VgSubPred => "vg_sub_pred",
            MatrixKind::VgObjPred => "vg_obj_pred",
            MatrixKind::VgPredSub => "vg_pred_sub",
            MatrixKind::VgPredObj => "vg_pred_obj",
            MatrixKind::Category => "category",
            MatrixKind::Wup => "wup",
        }
    }

    pub fn from_name(name: &str) -> Option<MatrixKind> {
        MatrixKind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn source(self) -> ClassKind {
        use MatrixKind::*;
        match self {
            VgSubjectObject | VgObjectSubject | ConceptnetRelatedTo | VgSubPred | VgObjPred => ClassKind::Object,
            VgPredSub | VgPredObj | Category | Wup => ClassKind::Predicate,
        }
    }

    pub fn target(self) -> ClassKind {
        use MatrixKind::*;
        match self {
            VgSubjectObject | VgObjectSubject | ConceptnetRelatedTo | VgPredSub | VgPredObj => ClassKind::Object,
            VgSubPred | VgObjPred | Category | Wup => ClassKind::Predicate,
        }
    }

    /// Matrices holding only 0/1 weights.
    pub fn is_binary(self) -> bool {
        matches!(self, MatrixKind::ConceptnetRelatedTo | MatrixKind::Category)
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, MatrixKind::Category | MatrixKind::Wup)
    }

    /// File name used for this matrix inside a knowledge directory.
    pub fn file_name(self) -> String {
        format!("{}.tsv", self.name())
    }
}

/// Dense weights from one class vocabulary to another, all in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypedAdjacency {
    pub kind: MatrixKind,
    pub source_type: ClassKind,
    pub target_type: ClassKind,
    pub weights: Tensor,
}

impl TypedAdjacency {
    pub fn zeros(kind: MatrixKind, vocab: &Vocab) -> Self {
        let n = |k| match k {
            ClassKind::Object => vocab.n_objects(),
            ClassKind::Predicate => vocab.n_predicates(),
        };
        TypedAdjacency {
            kind,
            source_type: kind.source(),
            target_type: kind.target(),
            weights: Tensor::zeros(&[n(kind.source()), n(kind.target())]),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KgMode {
    #[default]
    External,
    Internal,
}

impl std::str::FromStr for KgMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "external" => Ok(KgMode::External),
            "internal" => Ok(KgMode::Internal),
            other => Err(format!("unknown kg mode `{other}` (expected external or internal)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub vocab: Vocab,
    pub mode: KgMode,
    pub object_embeddings: Tensor,
    pub predicate_embeddings: Tensor,
    /// One matrix per [`MatrixKind`], in [`MatrixKind::ALL`] order.
    pub matrices: Vec<TypedAdjacency>,
}

/// Where the files making up an external knowledge graph live.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KgSources {
    pub embeddings: PathBuf,
    pub edge_files: BTreeMap<MatrixKind, PathBuf>,
    pub category_groups: Vec<Vec<String>>,
}

impl KgSources {
    /// Conventional layout: `embeddings.txt` plus `<matrix>.tsv` per loaded
    /// matrix (category comes from `groups`).
    pub fn from_dir(dir: &Path, groups: Vec<Vec<String>>) -> Self {
        let edge_files = MatrixKind::ALL
            .into_iter()
            .filter(|k| *k != MatrixKind::Category)
            .map(|k| (k, dir.join(k.file_name())))
            .collect();
        KgSources { embeddings: dir.join("embeddings.txt"), edge_files, category_groups: groups }
    }
}

/// Warning tallies gathered while assembling.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AssemblyReport {
    pub skipped_edges: BTreeMap<MatrixKind, usize>,
    pub missing_words: Vec<String>,
}

/// Builds the knowledge graph. In internal mode every matrix is zero but
/// embeddings are loaded as usual and no edge files are read.
pub fn assemble(vocab: &Vocab, sources: &KgSources, mode: KgMode) -> Result<(KnowledgeGraph, AssemblyReport), KnowledgeError> {
    let embeddings = load_embeddings(&sources.embeddings)?;
    let mut report = AssemblyReport::default();
    let mut embed_all = |names: &[String]| -> Result<Tensor, KnowledgeError> {
        let mut values = Vec::with_capacity(names.len() * embeddings.dim());
        for n in names {
            let (v, missing) = label_embedding(n, &embeddings);
            report.missing_words.extend(missing);
            values.extend(v);
        }
        Tensor::new(vec![names.len(), embeddings.dim()], values)
            .map_err(|e| KnowledgeError::Config(e.to_string()))
    };
    let object_embeddings = embed_all(vocab.objects())?;
    let predicate_embeddings = embed_all(vocab.predicates())?;

    let mut matrices = Vec::with_capacity(9);
    for kind in MatrixKind::ALL {
        let m = match (mode, kind) {
            (KgMode::Internal, _) => TypedAdjacency::zeros(kind, vocab),
            (KgMode::External, MatrixKind::Category) => build_category_matrix(vocab, &sources.category_groups)?,
            (KgMode::External, _) => {
                let path = sources.edge_files.get(&kind).ok_or_else(|| {
                    KnowledgeError::Config(format!("no edge-list file given for `{}`", kind.name()))
                })?;
                if !path.is_file() {
                    return Err(KnowledgeError::Config(format!(
                        "edge-list file for `{}` not found: {}",
                        kind.name(),
                        path.display()
                    )));
                }
                let loaded = load_edge_list(path, kind, vocab)?;
                if loaded.skipped > 0 {
                    report.skipped_edges.insert(kind, loaded.skipped);
                }
                loaded.adjacency
            }
        };
        matrices.push(m);
    }
    let kg = KnowledgeGraph { vocab: vocab.clone(), mode, object_embeddings, predicate_embeddings, matrices };
    kg.validate()?;
    Ok((kg, report))
}

impl KnowledgeGraph {
    pub fn matrix(&self, kind: MatrixKind) -> &TypedAdjacency {
        &self.matrices[MatrixKind::ALL.iter().position(|k| *k == kind).expect("known kind")]
    }

    pub fn embedding_dim(&self) -> usize {
        self.object_embeddings.cols()
    }

    /// The same graph with every knowledge matrix zeroed.
    pub fn zeroed(&self) -> KnowledgeGraph {
        let mut kg = self.clone();
        kg.mode = KgMode::Internal;
        for m in &mut kg.matrices {
            m.weights = Tensor::zeros(m.weights.shape());
        }
        kg
    }

    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let bad = |m: String| Err(KnowledgeError::Config(m));
        if self.matrices.len() != 9 {
            return bad(format!("expected 9 knowledge matrices, found {}", self.matrices.len()));
        }
        let n = |k| match k {
            ClassKind::Object => self.vocab.n_objects(),
            ClassKind::Predicate => self.vocab.n_predicates(),
        };
        if self.object_embeddings.rows() != self.vocab.n_objects()
            || self.predicate_embeddings.rows() != self.vocab.n_predicates()
            || self.object_embeddings.cols() != self.predicate_embeddings.cols()
        {
            return bad("embedding matrices do not match the vocabulary".into());
        }
        for (m, kind) in self.matrices.iter().zip(MatrixKind::ALL) {
            if m.kind != kind || m.source_type != kind.source() || m.target_type != kind.target() {
                return bad(format!("matrix slot for `{}` holds `{}`", kind.name(), m.name()));
            }
            if m.weights.shape() != [n(kind.source()), n(kind.target())] {
                return bad(format!("`{}` has shape {:?}", kind.name(), m.weights.shape()));
            }
            let w = m.weights.values();
            if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad(format!("`{}` has weights outside [0, 1]", kind.name()));
            }
            if kind.is_binary() && w.iter().any(|&v| v != 0.0 && v != 1.0) {
                return bad(format!("`{}` must be binary", kind.name()));
            }
            if kind.is_symmetric() && m.weights != m.weights.transpose() {
                return bad(format!("`{}` must be symmetric", kind.name()));
            }
        }
        Ok(())
    }
}
