//! Provider contracts for text generation, sentence embedding and sequence
//! scoring, plus the caching/retrying gateway that fronts every backend.

mod cache;
mod gateway;
mod limit;
pub mod mock;
pub mod openai;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, CacheEntry, DiskCache, MemoryCache, ResponseCache};
pub use gateway::{Gateway, GatewayConfig, RetryPolicy};
pub use limit::{Limiter, Permit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".to_string(),
            temperature: 0.0,
            max_tokens: 512,
            stop: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LmError {
    /// Retries exhausted on transient failures.
    #[error("provider {provider} unavailable after {attempts} attempts (last status {last_status:?}): {message}")]
    Unavailable {
        provider: String,
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    /// Rate limiting, server errors and transport failures; worth retrying.
    #[error("transient backend failure (status {status:?}): {message}")]
    Transient { status: Option<u16>, message: String },
    #[error("backend rejected request with status {status}: {message}")]
    Backend { status: u16, message: String },
    #[error("malformed backend payload: {0}")]
    Protocol(String),
    #[error("backend lacks a required capability: {0}")]
    Capability(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LmError {
    pub fn is_transient(&self) -> bool {
        matches!(self, LmError::Transient { .. })
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            LmError::Unavailable { last_status, .. } => *last_status,
            LmError::Transient { status, .. } => *status,
            LmError::Backend { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub trait GenerationProvider: Send + Sync {
    /// Stable identifier, part of every cache key.
    fn id(&self) -> &str;
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, LmError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    /// One vector per input, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LmError>;
    /// Largest batch a single backend call accepts.
    fn max_batch(&self) -> usize {
        1000
    }
}

pub trait ScoringProvider: Send + Sync {
    fn id(&self) -> &str;
    fn perplexity(&self, text: &str) -> Result<f64, LmError>;
}

impl<T: GenerationProvider + ?Sized> GenerationProvider for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, LmError> {
        (**self).generate(prompt, params)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LmError> {
        (**self).embed(texts)
    }
    fn max_batch(&self) -> usize {
        (**self).max_batch()
    }
}

impl<T: ScoringProvider + ?Sized> ScoringProvider for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn perplexity(&self, text: &str) -> Result<f64, LmError> {
        (**self).perplexity(text)
    }
}

/// A generation provider bound to the request parameters used with it.
#[derive(Clone)]
pub struct LanguageModel {
    pub provider: Arc<dyn GenerationProvider>,
    pub params: GenerationParams,
}

impl LanguageModel {
    pub fn new(provider: Arc<dyn GenerationProvider>, params: GenerationParams) -> Self {
        Self { provider, params }
    }

    pub fn generate(&self, prompt: &str) -> Result<String, LmError> {
        self.provider.generate(prompt, &self.params)
    }

    pub fn model(&self) -> &str {
        &self.params.model
    }
}

impl std::fmt::Debug for LanguageModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LanguageModel")
            .field("provider", &self.provider.id())
            .field("params", &self.params)
            .finish()
    }
}

/// Carrier sentence whose perplexity measures how well `concept` fits the
/// context of `seed`.
pub fn relevance_sentence(concept: &str, seed: &str) -> String {
    format!("{concept} often occurs in the context of {seed}")
}

/// `exp(-mean(logprobs))`.
pub fn perplexity_from_logprobs(logprobs: &[f64]) -> Result<f64, LmError> {
    if logprobs.is_empty() {
        return Err(LmError::Protocol("no token log-probabilities".into()));
    }
    if logprobs.iter().any(|lp| !lp.is_finite()) {
        return Err(LmError::Protocol("non-finite token log-probability".into()));
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Ok((-mean).exp())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn unit(mut v: Vec<f64>) -> Result<Vec<f64>, LmError> {
    let norm = dot(&v, &v).sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(LmError::Protocol("embedding has zero or non-finite norm".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}
