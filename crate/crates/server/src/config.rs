use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::ServiceError;

/// Service configuration, read from TOML:
///
/// ```toml
/// task_file = "initial_clusters.tsv"   # partition TSV of initial clusters
/// log_path = "rounds.jsonl"            # append-only round log
/// preview_dir = "previews"             # optional, holds <model_id>.xyz
/// bind = "127.0.0.1:8080"
///
/// [annotators]                         # name = token
/// alice = "s3cret-a"
/// ```
///
/// Relative paths resolve against the config file's directory.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub task_file: PathBuf,
    pub log_path: PathBuf,
    #[serde(default)]
    pub preview_dir: Option<PathBuf>,
    #[serde(default = "default_bind")]
    pub bind: String,
    pub annotators: BTreeMap<String, String>,
}

fn default_bind() -> String {
    "127.0.0.1:8080".to_string()
}

impl ServiceConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ServiceError> {
        let mut cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.task_file);
        resolve(&mut cfg.log_path);
        if let Some(p) = cfg.preview_dir.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.annotators.is_empty() {
            return Err(ServiceError::Config("no annotators configured".into()));
        }
        let mut tokens = std::collections::HashSet::new();
        for (name, token) in &self.annotators {
            if token.is_empty() {
                return Err(ServiceError::Config(format!("annotator {name} has an empty token")));
            }
            if !tokens.insert(token) {
                return Err(ServiceError::Config(format!("annotator {name} shares a token with another annotator")));
            }
        }
        Ok(())
    }
}
