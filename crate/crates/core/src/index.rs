//! The entity index: equivalence classes of mentions, the chunk-class
//! incidence matrix, per-class embeddings, and the on-disk JSON format.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::alignment::linalg::Matrix;
use crate::corpus::{self, Chunk, Document, SegmentConfig};
use crate::embedding::{self, EmbedConfig, EmbeddingVector};
use crate::error::{Error, Result};
use crate::extraction::{self, EntityMention, ExtractorConfig};
use crate::gateway::{ModelGateway, Phase, TokenUsage};

pub const SCHEMA_VERSION: u32 = 1;
pub const DESCRIPTION_SEPARATOR: &str = "\n";

const STRIP_CHARS: &[char] = &['.', ',', ';', ':', '!', '?', '"', '\'', '(', ')'];

/// Canonical form used for syntactic name equality: NFKC, lowercased,
/// whitespace runs collapsed, surrounding punctuation removed.
pub fn normalize_name(name: &str) -> String {
    let folded: String = name.nfkc().collect::<String>().to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(STRIP_CHARS).trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceClass {
    pub class_id: usize,
    pub display_name: String,
    pub normalized_name: String,
    pub members: Vec<EntityMention>,
    pub concat_description: String,
    pub chunk_ids: Vec<usize>,
}

/// Groups mentions by normalized name.
///
/// Mentions are ordered by chunk id (stable, so extraction order is kept
/// within a chunk); class ids follow first appearance in that order.
pub fn build_classes(mentions: &[EntityMention]) -> Vec<EquivalenceClass> {
    let mut ordered: Vec<&EntityMention> = mentions.iter().collect();
    ordered.sort_by_key(|m| m.chunk_id);

    let mut by_key: HashMap<String, usize> = HashMap::new();
    let mut classes: Vec<EquivalenceClass> = Vec::new();
    for m in ordered {
        let key = normalize_name(&m.name);
        let id = *by_key.entry(key.clone()).or_insert_with(|| {
            classes.push(EquivalenceClass {
                class_id: classes.len(),
                display_name: m.name.clone(),
                normalized_name: key,
                members: Vec::new(),
                concat_description: String::new(),
                chunk_ids: Vec::new(),
            });
            classes.len() - 1
        });
        classes[id].members.push(m.clone());
    }

    for class in &mut classes {
        class.concat_description = class
            .members
            .iter()
            .map(|m| m.description.as_str())
            .collect::<Vec<_>>()
            .join(DESCRIPTION_SEPARATOR);
        class.chunk_ids = class.members.iter().map(|m| m.chunk_id).collect();
        class.chunk_ids.dedup();
    }
    classes
}

/// Dense binary chunk-by-class matrix: entry `(k, s)` is set when class `s`
/// has a mention in chunk `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl IncidenceMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (k, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged incidence rows");
            for (s, &b) in row.iter().enumerate() {
                m.set(k, s, b != 0);
            }
        }
        m
    }

    pub fn num_chunks(&self) -> usize {
        self.rows
    }

    pub fn num_classes(&self) -> usize {
        self.cols
    }

    pub fn get(&self, chunk: usize, class: usize) -> bool {
        self.bits[chunk * self.cols + class]
    }

    pub fn set(&mut self, chunk: usize, class: usize, value: bool) {
        self.bits[chunk * self.cols + class] = value;
    }

    pub fn column(&self, class: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.rows).filter(move |&k| self.get(k, class))
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|k| (0..self.cols).map(|s| self.get(k, s) as u8).collect())
            .collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |k, s| if self.get(k, s) { 1.0 } else { 0.0 })
    }
}

pub fn build_incidence(classes: &[EquivalenceClass], num_chunks: usize) -> Result<IncidenceMatrix> {
    let mut m = IncidenceMatrix::zeros(num_chunks, classes.len());
    for (s, class) in classes.iter().enumerate() {
        for &k in &class.chunk_ids {
            if k >= num_chunks {
                return Err(Error::ChunkIdOutOfRange {
                    chunk_id: k,
                    num_chunks,
                });
            }
            m.set(k, s, true);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    pub segment: SegmentConfig,
    pub extraction: ExtractorConfig,
    pub embedding: EmbedConfig,
    /// Extraction calls in flight during indexing.
    pub max_concurrent_requests: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            segment: SegmentConfig::default(),
            extraction: ExtractorConfig::default(),
            embedding: EmbedConfig::default(),
            max_concurrent_requests: 4,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_concurrent_requests == 0 {
            return Err(Error::invalid("max_concurrent_requests must be >= 1"));
        }
        self.segment.validate()?;
        self.extraction.validate()?;
        self.embedding.validate()?;
        Ok(())
    }
}

/// Immutable retrieval index over one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    config: IndexConfig,
    chunks: Vec<Chunk>,
    classes: Vec<EquivalenceClass>,
    incidence: IncidenceMatrix,
    embeddings: Vec<EmbeddingVector>,
    dim: usize,
    token_usage: TokenUsage,
}

impl Index {
    /// Assembles an index from parts, checking their mutual consistency.
    pub fn from_parts(
        config: IndexConfig,
        chunks: Vec<Chunk>,
        classes: Vec<EquivalenceClass>,
        embeddings: Vec<EmbeddingVector>,
        dim: usize,
        token_usage: TokenUsage,
    ) -> Result<Self> {
        for (i, c) in chunks.iter().enumerate() {
            if c.chunk_id != i {
                return Err(Error::invalid(format!("chunk at position {i} has id {}", c.chunk_id)));
            }
        }
        for (i, c) in classes.iter().enumerate() {
            if c.class_id != i {
                return Err(Error::invalid(format!("class at position {i} has id {}", c.class_id)));
            }
            if c.chunk_ids.is_empty() {
                return Err(Error::invalid(format!("class {i} occurs in no chunk")));
            }
        }
        if embeddings.len() != classes.len() {
            return Err(Error::invalid(format!(
                "{} embeddings for {} classes",
                embeddings.len(),
                classes.len()
            )));
        }
        if let Some(bad) = embeddings.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        let incidence = build_incidence(&classes, chunks.len())?;
        Ok(Self {
            config,
            chunks,
            classes,
            incidence,
            embeddings,
            dim,
            token_usage,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn classes(&self) -> &[EquivalenceClass] {
        &self.classes
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    pub fn embeddings(&self) -> &[EmbeddingVector] {
        &self.embeddings
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token_usage(&self) -> TokenUsage {
        self.token_usage
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// `P x S` matrix whose column `s` is the embedding of class `s`.
    pub fn embedding_matrix(&self) -> Matrix {
        Matrix::from_fn(self.dim, self.classes.len(), |p, s| self.embeddings[s].0[p])
    }

    pub fn find_class(&self, name: &str) -> Option<&EquivalenceClass> {
        let key = normalize_name(name);
        self.classes.iter().find(|c| c.normalized_name == key)
    }
}

/// Runs the full indexing pipeline over `.txt`/`.md` files under `corpus_dir`.
pub fn build_index(corpus_dir: &Path, cfg: &IndexConfig, gateway: Option<&ModelGateway>) -> Result<Index> {
    let docs = corpus::load_corpus_dir(corpus_dir)?;
    build_index_from_documents(&docs, cfg, gateway)
}

pub fn build_index_from_documents(
    docs: &[Document],
    cfg: &IndexConfig,
    gateway: Option<&ModelGateway>,
) -> Result<Index> {
    cfg.validate()?;
    let usage_before = gateway.map(ModelGateway::usage).unwrap_or_default();

    let chunks = corpus::segment_corpus(docs, &cfg.segment)?;
    log::info!("segmented {} documents into {} chunks", docs.len(), chunks.len());

    let per_chunk = extraction::extract_all(&chunks, &cfg.extraction, gateway, cfg.max_concurrent_requests)?;
    let mentions: Vec<EntityMention> = per_chunk.into_iter().flatten().collect();
    log::info!("extracted {} entity mentions", mentions.len());

    let classes = build_classes(&mentions);
    if classes.is_empty() {
        return Err(Error::IndexEmpty);
    }

    let shortener = if cfg.extraction.llm_shortening { gateway } else { None };
    let embed_limit = 4 * cfg.extraction.shorten_threshold;
    let texts: Vec<String> = classes
        .iter()
        .map(|c| extraction::shorten(&c.concat_description, embed_limit, shortener))
        .collect();
    let embeddings = embedding::embed(&texts, &cfg.embedding, gateway, Phase::Index)?;

    let usage_after = gateway.map(ModelGateway::usage).unwrap_or_default();
    let token_usage = TokenUsage {
        index_prompt: usage_after.index_prompt - usage_before.index_prompt,
        index_completion: usage_after.index_completion - usage_before.index_completion,
        index_embed: usage_after.index_embed - usage_before.index_embed,
        ..TokenUsage::default()
    };

    Index::from_parts(cfg.clone(), chunks, classes, embeddings, cfg.embedding.dim, token_usage)
}

#[derive(Serialize, Deserialize)]
struct EmbeddingBlock {
    dim: usize,
    data: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    schema_version: u32,
    config: IndexConfig,
    chunks: Vec<Chunk>,
    classes: Vec<EquivalenceClass>,
    embeddings: EmbeddingBlock,
    #[serde(default)]
    token_usage: TokenUsage,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

pub fn index_to_json(index: &Index) -> String {
    let file = IndexFile {
        schema_version: SCHEMA_VERSION,
        config: index.config.clone(),
        chunks: index.chunks.clone(),
        classes: index.classes.clone(),
        embeddings: EmbeddingBlock {
            dim: index.dim,
            data: index.embeddings.iter().map(|e| e.0.clone()).collect(),
        },
        token_usage: index.token_usage,
    };
    serde_json::to_string(&file).expect("index serializes")
}

pub fn index_from_json(text: &str) -> Result<Index> {
    let invalid = |e: serde_json::Error| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e));
    let probe: VersionProbe = serde_json::from_str(text).map_err(invalid)?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch {
            found: probe.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let file: IndexFile = serde_json::from_str(text).map_err(invalid)?;
    Index::from_parts(
        file.config,
        file.chunks,
        file.classes,
        file.embeddings.data.into_iter().map(EmbeddingVector).collect(),
        file.embeddings.dim,
        file.token_usage,
    )
}

pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, index_to_json(index))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<Index> {
    let text = fs::read_to_string(path)?;
    index_from_json(&text)
}
