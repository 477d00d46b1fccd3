use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::knowledge::{default_category_groups, KgSources, MatrixKind, Vocab};
use crate::training::TrainConfig;

/// Paths and knowledge settings read from the top level of a config file;
/// every other key must be a [`TrainConfig`] field.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub corpus: Option<PathBuf>,
    pub eval_corpus: Option<PathBuf>,
    pub kg_dir: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Matrix name to edge-list file; overrides files found in `kg_dir`.
    #[serde(default)]
    pub edge_files: BTreeMap<String, PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub category_groups: Option<Vec<Vec<String>>>,
}

const PATH_KEYS: [&str; 9] = [
    "corpus",
    "eval_corpus",
    "kg_dir",
    "embeddings",
    "edge_files",
    "vocab",
    "checkpoint",
    "output_dir",
    "category_groups",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub paths: PathConfig,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Config { path: origin.to_path_buf(), msg };
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        let mut paths = toml::Table::new();
        for key in PATH_KEYS {
            if let Some(v) = table.remove(key) {
                paths.insert(key.to_string(), v);
            }
        }
        let paths: PathConfig = paths.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        let train: TrainConfig = table.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        Ok(RunConfig { train, paths })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Knowledge file locations; every referenced file must exist.
    pub fn kg_sources(&self, vocab: &Vocab) -> Result<KgSources, CliError> {
        let groups = self.paths.category_groups.clone().unwrap_or_else(|| default_category_groups(vocab));
        let mut sources = match &self.paths.kg_dir {
            Some(dir) => {
                if !dir.is_dir() {
                    return Err(CliError::Usage(format!("knowledge directory not found: {}", dir.display())));
                }
                KgSources::from_dir(dir, groups)
            }
            None => KgSources { category_groups: groups, ..KgSources::default() },
        };
        if let Some(e) = &self.paths.embeddings {
            sources.embeddings = e.clone();
        }
        for (name, path) in &self.paths.edge_files {
            let kind = MatrixKind::from_name(name)
                .ok_or_else(|| CliError::Usage(format!("unknown knowledge matrix `{name}` in edge_files")))?;
            sources.edge_files.insert(kind, path.clone());
        }
        if sources.embeddings.as_os_str().is_empty() {
            return Err(CliError::Usage("no embedding file given (use --kg-dir or --embeddings)".into()));
        }
        if !sources.embeddings.is_file() {
            return Err(CliError::Usage(format!("embedding file not found: {}", sources.embeddings.display())));
        }
        Ok(sources)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_paths_from_training_fields() {
        let text = r#"
            corpus = "scenes"
            output_dir = "out"
            learning_rate = 0.01
            epochs = 7
            kg_mode = "internal"
            [edge_files]
            wup = "w.tsv"
        "#;
        let c = RunConfig::parse(text, Path::new("run.toml")).unwrap();
        assert_eq!(c.paths.corpus.as_deref(), Some(Path::new("scenes")));
        assert_eq!(c.paths.edge_files["wup"], PathBuf::from("w.tsv"));
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.kg_mode, crate::knowledge::KgMode::Internal);
        assert_eq!(c.train.lambda_obj, 0.5);
    }

    #[test]
    fn unknown_key_names_the_file() {
        let err = RunConfig::parse("learning_rat = 0.1", Path::new("bad.toml")).unwrap_err().to_string();
        assert!(err.contains("bad.toml") && err.contains("learning_rat"), "{err}");
    }
}
