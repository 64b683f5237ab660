//! Effective configuration: config file, then environment, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unweaver::{
    AlignConfig, ElectionConfig, EmbedBackend, ExtractorBackend, GatewayConfig, IndexConfig, SimilarityConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Offline heuristic extractor and hashing embedder.
    #[default]
    Stub,
    /// Chat-completion extraction and API embeddings through the gateway.
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub backend: Backend,
    pub index_path: PathBuf,
    pub index: IndexConfig,
    pub similarity: SimilarityConfig,
    pub election: ElectionConfig,
    pub align: AlignConfig,
    pub gateway: GatewayConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Stub,
            index_path: PathBuf::from("unweaver-index.json"),
            index: IndexConfig::default(),
            similarity: SimilarityConfig::default(),
            election: ElectionConfig::default(),
            align: AlignConfig::default(),
            gateway: GatewayConfig::default(),
        }
    }
}

/// Reads a `.toml` or `.json` config file. Missing sections keep defaults.
pub fn read_config_file(path: &Path) -> Result<CliConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display())),
        Some("json") => serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display())),
        _ => Err(format!("config {} must end in .toml or .json", path.display())),
    }
}

impl CliConfig {
    /// Switches extraction and embedding to the selected backend.
    pub fn apply_backend(&mut self, backend: Backend) {
        self.backend = backend;
        let (extract, embed) = match backend {
            Backend::Stub => (ExtractorBackend::Stub, EmbedBackend::Stub),
            Backend::Llm => (ExtractorBackend::Llm, EmbedBackend::Api),
        };
        self.index.extraction.backend = extract;
        self.index.embedding.backend = embed;
    }

    pub fn validate(&self) -> unweaver::Result<()> {
        self.index.validate()?;
        self.similarity.validate()?;
        self.election.validate()?;
        self.align.validate()?;
        self.gateway.validate()?;
        Ok(())
    }
}
