use std::path::Path;

use super::{SceneError, SceneSample};
use crate::knowledge::VocabRegistry;

/// Parses scene JSON and validates it against the vocabularies in `registry`.
pub fn parse_scene(text: &str, origin: &str, registry: &VocabRegistry) -> Result<SceneSample, SceneError> {
    let scene: SceneSample = serde_json::from_str(text).map_err(|e| SceneError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    scene.validate_structure(origin)?;
    let vocab = registry
        .get(&scene.vocab)
        .ok_or_else(|| SceneError::UnknownVocab(scene.vocab.clone()))?;
    scene.validate_vocab(vocab, origin)?;
    Ok(scene)
}

pub fn load_scene(path: &Path, registry: &VocabRegistry) -> Result<SceneSample, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scene(&text, &path.display().to_string(), registry)
}

pub fn scene_to_string(scene: &SceneSample) -> String {
    let mut s = serde_json::to_string(scene).expect("scene serializes");
    s.push('\n');
    s
}

pub fn save_scene(scene: &SceneSample, path: &Path) -> Result<(), SceneError> {
    std::fs::write(path, scene_to_string(scene)).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}
