//! Pipeline configuration loaded from TOML, plus the metadata sidecar
//! written next to every output artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{BackboneConfig, TrainConfig};
use crate::datastore::{write_atomic, SplitSpec};
use crate::dialogue_gen::{ProviderParams, RemoteProviderConfig, RetryPolicy};
use crate::error::{Error, Result};
use crate::evaluation::{DifficultyMode, ProcessedOutputFormula};
use crate::personas::HeaderStyle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    /// Seed of the mock provider.
    pub mock_seed: u64,
    pub remote: RemoteProviderConfig,
    pub params: ProviderParams,
    pub retry: RetryPolicy,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            mock_seed: 0,
            remote: RemoteProviderConfig::default(),
            params: ProviderParams::new(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    /// One user utterance per line; the built-in pool when absent.
    pub user_lines: Option<PathBuf>,
    pub scripts: usize,
    pub exchanges: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            user_lines: None,
            scripts: 10,
            exchanges: 10,
            seed: 0,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSection {
    pub formula: ProcessedOutputFormula,
    pub difficulty: DifficultyMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSection {
    pub bind: String,
    pub journal: PathBuf,
    /// Completed annotations wanted per message.
    pub redundancy: usize,
    /// Accepted annotator ids; empty accepts anyone.
    pub annotators: Vec<String>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            journal: PathBuf::from("annotations.jsonl"),
            redundancy: 1,
            annotators: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub provider: ProviderSection,
    pub personas: HeaderStyle,
    pub corpus: CorpusSection,
    pub split: SplitSpec,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub evaluation: EvaluationSection,
    pub service: ServiceSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads `path`; relative paths inside are resolved against the
    /// directory holding the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.corpus.user_lines.as_mut() {
            fix(p);
        }
        fix(&mut self.service.journal);
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Provenance written to `<artifact>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub created_at: String,
    pub config: serde_json::Value,
}

impl RunMetadata {
    pub fn new(command: impl Into<String>, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: "traitgen".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            created_at: chrono::Utc::now().to_rfc3339(),
            config: serde_json::to_value(config)?,
        })
    }
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

pub fn write_sidecar(artifact: &Path, meta: &RunMetadata) -> Result<()> {
    let json = serde_json::to_vec_pretty(meta)?;
    write_atomic(&sidecar_path(artifact), &json)
}
