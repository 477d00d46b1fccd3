use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

/// Name of the built-in vocabulary used by the synthetic corpus.
pub const SYNTHETIC_VOCAB: &str = "synthetic-o8r5";

/// Ordered object and predicate vocabularies. Indices are positions in the
/// lists and never change once built.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub name: String,
    object_names: Vec<String>,
    predicate_names: Vec<String>,
}

impl Vocab {
    pub fn new(
        name: impl Into<String>,
        objects: Vec<String>,
        predicates: Vec<String>,
    ) -> Result<Self, KnowledgeError> {
        let name = name.into();
        for (kind, list) in [("object", &objects), ("predicate", &predicates)] {
            if list.is_empty() {
                return Err(KnowledgeError::Vocab(format!("{name}: empty {kind} list")));
            }
            let mut seen = HashSet::new();
            for n in list {
                if !seen.insert(n.as_str()) {
                    return Err(KnowledgeError::Vocab(format!("{name}: duplicate {kind} `{n}`")));
                }
            }
        }
        Ok(Vocab {
            name,
            object_names: objects,
            predicate_names: predicates,
        })
    }

    /// Eight household objects and five spatial predicates.
    pub fn synthetic() -> Self {
        let objects = [
            "table", "chair", "sofa", "shelf", "side table", "cup", "book", "lamp",
        ];
        let predicates = ["on", "under", "near", "bigger_than", "smaller_than"];
        Vocab::new(
            SYNTHETIC_VOCAB,
            objects.iter().map(|s| s.to_string()).collect(),
            predicates.iter().map(|s| s.to_string()).collect(),
        )
        .expect("built-in vocabulary is valid")
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::io(path, e))?;
        let raw: Vocab = serde_json::from_str(&text)
            .map_err(|e| KnowledgeError::Vocab(format!("{}: {e}", path.display())))?;
        Vocab::new(raw.name, raw.object_names, raw.predicate_names)
    }

    pub fn objects(&self) -> &[String] {
        &self.object_names
    }

    pub fn predicates(&self) -> &[String] {
        &self.predicate_names
    }

    pub fn n_objects(&self) -> usize {
        self.object_names.len()
    }

    pub fn n_predicates(&self) -> usize {
        self.predicate_names.len()
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.object_names.iter().position(|n| n == name)
    }

    pub fn predicate_index(&self, name: &str) -> Option<usize> {
        self.predicate_names.iter().position(|n| n == name)
    }
}

/// Vocabularies that scene files may reference by name.
#[derive(Clone, Debug)]
pub struct VocabRegistry {
    vocabs: BTreeMap<String, Vocab>,
}

impl Default for VocabRegistry {
    fn default() -> Self {
        VocabRegistry::builtin()
    }
}

impl VocabRegistry {
    pub fn builtin() -> Self {
        let mut vocabs = BTreeMap::new();
        let v = Vocab::synthetic();
        vocabs.insert(v.name.clone(), v);
        VocabRegistry { vocabs }
    }

    pub fn register(&mut self, vocab: Vocab) {
        self.vocabs.insert(vocab.name.clone(), vocab);
    }

    pub fn get(&self, name: &str) -> Option<&Vocab> {
        self.vocabs.get(name)
    }
}
