//! Document loading and sliding-window segmentation into chunks.
//!
//! Tokens are maximal runs of non-whitespace characters (Unicode
//! whitespace). Each chunk keeps the byte span it covers in its source
//! document, so chunk texts can be stitched back into the original.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub source_id: String,
    pub text: String,
}

impl Document {
    pub fn new(source_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: usize,
    pub source_id: String,
    pub text: String,
    pub token_count: usize,
    /// Half-open token range `[start, end)` within the source document.
    pub token_range: (usize, usize),
    /// Half-open byte range within the source document text.
    pub byte_range: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub target_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            target_tokens: 256,
            overlap_tokens: 32,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_tokens < 8 {
            return Err(Error::invalid(format!(
                "target_tokens must be >= 8, got {}",
                self.target_tokens
            )));
        }
        if self.overlap_tokens >= self.target_tokens {
            return Err(Error::invalid(format!(
                "overlap_tokens ({}) must be smaller than target_tokens ({})",
                self.overlap_tokens, self.target_tokens
            )));
        }
        Ok(())
    }
}

/// Byte spans of whitespace-delimited tokens.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// Splits one document into chunks with ids starting at 0.
///
/// Chunk `i` covers bytes from the start of its first token up to the start
/// of the token after its last one (or the end of the document for the final
/// chunk); the first chunk also keeps any leading whitespace.
pub fn segment(doc: &Document, cfg: &SegmentConfig) -> Result<Vec<Chunk>> {
    segment_from(doc, cfg, 0)
}

fn segment_from(doc: &Document, cfg: &SegmentConfig, first_id: usize) -> Result<Vec<Chunk>> {
    cfg.validate()?;
    let spans = token_spans(&doc.text);
    if spans.is_empty() {
        return Err(Error::EmptyDocument(doc.source_id.clone()));
    }
    let n = spans.len();
    let byte_start = |tok: usize| if tok == 0 { 0 } else { spans[tok].0 };
    let byte_end = |tok: usize| if tok == n { doc.text.len() } else { spans[tok].0 };

    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + cfg.target_tokens).min(n);
        let (b0, b1) = (byte_start(start), byte_end(end));
        chunks.push(Chunk {
            chunk_id: first_id + chunks.len(),
            source_id: doc.source_id.clone(),
            text: doc.text[b0..b1].to_string(),
            token_count: end - start,
            token_range: (start, end),
            byte_range: (b0, b1),
        });
        if end == n {
            break;
        }
        start = end - cfg.overlap_tokens;
    }
    Ok(chunks)
}

/// Segments documents in order, assigning dense chunk ids across the corpus.
pub fn segment_corpus(docs: &[Document], cfg: &SegmentConfig) -> Result<Vec<Chunk>> {
    let mut chunks = Vec::new();
    for doc in docs {
        let next = segment_from(doc, cfg, chunks.len())?;
        chunks.extend(next);
    }
    Ok(chunks)
}

/// Reads every `.txt` / `.md` file under `root`, sorted by path. Source ids
/// are paths relative to `root`, with `/` separators.
///
/// Documents that are empty after trimming are skipped with a warning.
pub fn load_corpus_dir(root: &Path) -> Result<Vec<Document>> {
    let mut paths = Vec::new();
    collect_files(root, &mut paths)?;
    paths.sort();

    let mut docs = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path)?;
        let rel = path.strip_prefix(root).unwrap_or(&path);
        let source_id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if text.trim().is_empty() {
            log::warn!("skipping empty document {source_id}");
            continue;
        }
        docs.push(Document { source_id, text });
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus(root.display().to_string()));
    }
    Ok(docs)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let ty = entry.file_type()?;
        if ty.is_dir() {
            collect_files(&path, out)?;
        } else if ty.is_file() && matches!(path.extension().and_then(|e| e.to_str()), Some("txt") | Some("md")) {
            out.push(path);
        }
    }
    Ok(())
}
