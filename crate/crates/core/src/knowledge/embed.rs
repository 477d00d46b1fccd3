use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::KnowledgeError;

/// Word vectors in GloVe text layout: a token followed by `dim` numbers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Embeddings {
    dim: usize,
    words: Vec<String>,
    vectors: HashMap<String, Vec<f64>>,
}

impl Embeddings {
    pub fn new(dim: usize) -> Self {
        Embeddings { dim, ..Default::default() }
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) {
        let word = word.into();
        assert_eq!(vector.len(), self.dim, "embedding width");
        if self.vectors.insert(word.clone(), vector).is_none() {
            self.words.push(word);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn parse_embeddings(text: &str, origin: &str) -> Result<Embeddings, KnowledgeError> {
    let mut out: Option<Embeddings> = None;
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let invalid = |msg: String| KnowledgeError::Validation {
            path: origin.to_string(),
            line: lineno + 1,
            msg,
        };
        let vector = parts
            .map(|p| p.parse::<f64>().map_err(|_| invalid(format!("`{p}` is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        if vector.is_empty() || vector.iter().any(|v| !v.is_finite()) {
            return Err(invalid("embedding vector must be non-empty and finite".into()));
        }
        let emb = out.get_or_insert_with(|| Embeddings::new(vector.len()));
        if vector.len() != emb.dim {
            return Err(invalid(format!("expected {} values, found {}", emb.dim, vector.len())));
        }
        emb.insert(word, vector);
    }
    out.ok_or_else(|| KnowledgeError::Validation {
        path: origin.to_string(),
        line: 0,
        msg: "embedding file is empty".into(),
    })
}

pub fn load_embeddings(path: &Path) -> Result<Embeddings, KnowledgeError> {
    let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::io(path, e))?;
    parse_embeddings(&text, &path.display().to_string())
}

pub fn write_embeddings(path: &Path, emb: &Embeddings) -> Result<(), KnowledgeError> {
    let mut out = String::new();
    for w in &emb.words {
        out.push_str(w);
        for v in &emb.vectors[w] {
            write!(out, " {v}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| KnowledgeError::io(path, e))
}

/// Mean of the word vectors of a label split on whitespace and `_`. Words
/// without a vector contribute zeros and are returned for reporting.
pub fn label_embedding(label: &str, emb: &Embeddings) -> (Vec<f64>, Vec<String>) {
    let words: Vec<&str> = label
        .split(|c: char| c.is_whitespace() || c == '_')
        .filter(|w| !w.is_empty())
        .collect();
    let mut sum = vec![0.0; emb.dim()];
    let mut missing = Vec::new();
    for w in &words {
        match emb.get(w) {
            Some(v) => sum.iter_mut().zip(v).for_each(|(s, x)| *s += x),
            None => missing.push(w.to_string()),
        }
    }
    if !words.is_empty() {
        let n = words.len() as f64;
        sum.iter_mut().for_each(|s| *s /= n);
    }
    (sum, missing)
}
