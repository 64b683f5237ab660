//! Text embedders: a hashed bag-of-tokens stub and the HTTP embeddings API.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{EmbedRequest, ModelGateway, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedBackend {
    #[default]
    Stub,
    Api,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub backend: EmbedBackend,
    pub dim: usize,
    pub batch_size: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            backend: EmbedBackend::Stub,
            dim: 64,
            batch_size: 32,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.backend == EmbedBackend::Stub && self.dim < 2 {
            return Err(Error::invalid(format!(
                "stub embedder needs dim >= 2, got {}",
                self.dim
            )));
        }
        if self.dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        Ok(())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Stub tokens: whitespace-split, lowercased, with leading and trailing
/// non-alphanumeric characters removed. Tokens that end up empty are
/// skipped.
pub fn stub_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
}

/// Hashed bag of tokens, L2-normalized. Text without tokens maps to the
/// zero vector.
pub fn stub_embed(text: &str, dim: usize) -> EmbeddingVector {
    let mut counts = vec![0.0f64; dim];
    for token in stub_tokens(text) {
        counts[(fnv1a64(token.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        log::warn!("embedding text without tokens as the zero vector");
        return EmbeddingVector(counts);
    }
    counts.iter_mut().for_each(|x| *x /= norm);
    EmbeddingVector(counts)
}

/// Embeds `texts` in order. The API backend sends `batch_size` texts per
/// request; batches run concurrently up to the gateway's request limit.
pub fn embed(
    texts: &[String],
    cfg: &EmbedConfig,
    gateway: Option<&ModelGateway>,
    phase: Phase,
) -> Result<Vec<EmbeddingVector>> {
    cfg.validate()?;
    match cfg.backend {
        EmbedBackend::Stub => Ok(texts.iter().map(|t| stub_embed(t, cfg.dim)).collect()),
        EmbedBackend::Api => {
            let gw = gateway.ok_or_else(|| Error::invalid("api embedder requires a model gateway"))?;
            embed_api(texts, cfg, gw, phase)
        }
    }
}

fn embed_api(texts: &[String], cfg: &EmbedConfig, gw: &ModelGateway, phase: Phase) -> Result<Vec<EmbeddingVector>> {
    use rayon::prelude::*;

    let mut out = Vec::with_capacity(texts.len());
    let non_empty: Vec<usize> = (0..texts.len()).filter(|&i| !texts[i].trim().is_empty()).collect();
    let batches: Vec<&[usize]> = non_empty.chunks(cfg.batch_size).collect();
    let results: Vec<Vec<Vec<f64>>> = batches
        .par_iter()
        .map(|batch| {
            let request = EmbedRequest {
                model: gw.config().embed_model.clone(),
                input: batch.iter().map(|&i| texts[i].clone()).collect(),
            };
            gw.embeddings(phase, &request).map(|r| r.embeddings)
        })
        .collect::<Result<_>>()?;

    let mut by_index: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
    for (batch, vectors) in batches.iter().zip(results) {
        for (&i, v) in batch.iter().zip(vectors) {
            if v.len() != cfg.dim {
                return Err(Error::DimensionMismatch {
                    expected: cfg.dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::MalformedOutput("embedding contains non-finite values".into()));
            }
            by_index[i] = Some(v);
        }
    }
    for slot in by_index {
        out.push(EmbeddingVector(slot.unwrap_or_else(|| {
            log::warn!("embedding empty text as the zero vector");
            vec![0.0; cfg.dim]
        })));
    }
    Ok(out)
}
