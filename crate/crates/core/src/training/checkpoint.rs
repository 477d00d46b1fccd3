use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TrainConfig;
use crate::knowledge::{KnowledgeGraph, Vocab};
use crate::ksgn::{Model, ModelError};
use crate::numeric::ParamStore;

pub const CHECKPOINT_FORMAT: &str = "ksgn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed checkpoint: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: checkpoint version {found} is not supported (expected {expected})")]
    Version { path: PathBuf, found: u64, expected: u32 },
    #[error("checkpoint vocabulary `{found}` does not match `{expected}`")]
    VocabMismatch { found: String, expected: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything needed to rebuild a trained model, including the knowledge
/// graph it was trained with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub n_objects: usize,
    pub n_predicates: usize,
    pub kg: KnowledgeGraph,
    pub params: ParamStore,
    pub epoch: usize,
    pub final_loss: Option<f64>,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, kg: &KnowledgeGraph, params: ParamStore, epoch: usize, final_loss: Option<f64>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            n_objects: kg.vocab.n_objects(),
            n_predicates: kg.vocab.n_predicates(),
            kg: kg.clone(),
            params,
            epoch,
            final_loss,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.kg.vocab
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<(), CheckpointError> {
        if self.kg.vocab != *vocab {
            return Err(CheckpointError::VocabMismatch { found: self.kg.vocab.name.clone(), expected: vocab.name.clone() });
        }
        Ok(())
    }

    /// Rebuilds the model and checks that the stored parameters fit it.
    pub fn model(&self) -> Result<Model, CheckpointError> {
        let cfg = self.config.model_config().map_err(|e| ModelError::Config(e.to_string()))?;
        let model = Model::new(cfg, self.kg.clone())?;
        model.check_params(&self.params)?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, CheckpointError> {
        let format_err = |msg: String| CheckpointError::Format { path: path.to_path_buf(), msg };
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?;
        if value.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(format_err(format!("missing `format: {CHECKPOINT_FORMAT}` marker")));
        }
        let version = value.get("version").and_then(|v| v.as_u64()).ok_or_else(|| format_err("missing version".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(CheckpointError::Version { path: path.to_path_buf(), found: version, expected: CHECKPOINT_VERSION });
        }
        let ck: Checkpoint = serde_json::from_value(value).map_err(|e| format_err(e.to_string()))?;
        ck.kg.validate().map_err(|e| format_err(e.to_string()))?;
        if ck.n_objects != ck.kg.vocab.n_objects() || ck.n_predicates != ck.kg.vocab.n_predicates() {
            return Err(format_err("vocabulary sizes do not match the stored vocabulary".into()));
        }
        Ok(ck)
    }
}

/// Writes to a sibling temporary file first so a failed write never leaves
/// a truncated checkpoint behind.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, ck.to_json()).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    Checkpoint::from_json(&text, path)
}
