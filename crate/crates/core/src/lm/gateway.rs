//! Caching, retrying, concurrency-bounded front for any provider.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::Duration;

use log::{debug, warn};
use rand::Rng;
use serde_json::json;

use super::cache::{cache_key, MemoryCache, ResponseCache};
use super::limit::Limiter;
use super::{EmbeddingProvider, GenerationParams, GenerationProvider, LmError, ScoringProvider};

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the first retry; doubles on every further retry.
    pub base_delay: Duration,
    /// Adds up to 50% random extra delay.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
            jitter: false,
        }
    }

    fn delay(&self, retry: u32) -> Duration {
        let base = self.base_delay.saturating_mul(1 << retry.min(16));
        if self.jitter && !base.is_zero() {
            base.mul_f64(1.0 + rand::thread_rng().gen_range(0.0..0.5))
        } else {
            base
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub retry: RetryPolicy,
    /// Maximum in-flight backend calls.
    pub parallelism: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            parallelism: 4,
        }
    }
}

/// Wraps a backend `P` and implements whichever provider traits `P` does.
///
/// Identical requests are answered from the cache without touching the
/// backend; misses go through the concurrency limiter and retry policy.
pub struct Gateway<P> {
    inner: P,
    cache: Arc<dyn ResponseCache>,
    retry: RetryPolicy,
    limiter: Limiter,
}

impl<P> Gateway<P> {
    pub fn new(inner: P, cache: Arc<dyn ResponseCache>, config: GatewayConfig) -> Self {
        Self {
            inner,
            cache,
            retry: config.retry,
            limiter: Limiter::new(config.parallelism),
        }
    }

    /// Memory-cached gateway with default policy.
    pub fn in_memory(inner: P) -> Self {
        Self::new(inner, Arc::new(MemoryCache::new()), GatewayConfig::default())
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn parallelism(&self) -> usize {
        self.limiter.capacity()
    }

    fn call<T>(&self, provider: &str, mut f: impl FnMut() -> Result<T, LmError>) -> Result<T, LmError> {
        let attempts = self.retry.attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.limiter.acquire();
                f()
            };
            match result {
                Ok(value) => return Ok(value),
                Err(err) if err.is_transient() => {
                    if attempt >= attempts {
                        return Err(LmError::Unavailable {
                            provider: provider.to_string(),
                            attempts: attempt,
                            last_status: err.status(),
                            message: err.to_string(),
                        });
                    }
                    let delay = self.retry.delay(attempt - 1);
                    warn!("{provider}: attempt {attempt} failed ({err}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn remember(&self, key: &str, value: &str) {
        if let Err(err) = self.cache.put(key, value) {
            warn!("cache write failed for {key}: {err}");
        }
    }
}

impl<P: GenerationProvider> GenerationProvider for Gateway<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, LmError> {
        if prompt.is_empty() {
            return Err(LmError::InvalidRequest("empty prompt".into()));
        }
        let request = json!({ "prompt": prompt, "params": params });
        let key = cache_key(self.inner.id(), "generate", &request);
        if let Some(hit) = self.cache.get(&key) {
            debug!("generate cache hit {key}");
            return Ok(hit);
        }
        let text = self.call(self.inner.id(), || self.inner.generate(prompt, params))?;
        self.remember(&key, &text);
        Ok(text)
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for Gateway<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn max_batch(&self) -> usize {
        self.inner.max_batch()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LmError> {
        if texts.is_empty() {
            return Err(LmError::InvalidRequest("no texts to embed".into()));
        }
        if texts.iter().any(|t| t.is_empty()) {
            return Err(LmError::InvalidRequest("cannot embed an empty text".into()));
        }
        let key_of = |t: &str| cache_key(self.inner.id(), "embed", &json!(t));
        let mut resolved: HashMap<&str, Vec<f64>> = HashMap::new();
        let mut misses: Vec<&String> = Vec::new();
        let mut pending = HashSet::new();
        for text in texts {
            if resolved.contains_key(text.as_str()) || pending.contains(text.as_str()) {
                continue;
            }
            let cached = self
                .cache
                .get(&key_of(text))
                .and_then(|s| serde_json::from_str::<Vec<f64>>(&s).ok());
            match cached {
                Some(v) => {
                    resolved.insert(text, v);
                }
                None => {
                    pending.insert(text.as_str());
                    misses.push(text);
                }
            }
        }
        // Deduplicated misses keep first-seen order, so batching is deterministic.
        for chunk in misses.chunks(self.inner.max_batch().max(1)) {
            let batch: Vec<String> = chunk.iter().map(|t| (*t).clone()).collect();
            let vectors = self.call(self.inner.id(), || self.inner.embed(&batch))?;
            if vectors.len() != chunk.len() {
                return Err(LmError::Protocol(format!(
                    "asked for {} embeddings, got {}",
                    chunk.len(),
                    vectors.len()
                )));
            }
            for (text, v) in chunk.iter().zip(vectors) {
                let v = super::unit(v)?;
                self.remember(&key_of(text), &serde_json::to_string(&v).expect("floats serialize"));
                resolved.insert(text.as_str(), v);
            }
        }
        let out: Vec<Vec<f64>> = texts.iter().map(|t| resolved[t.as_str()].clone()).collect();
        let dim = out[0].len();
        if out.iter().any(|v| v.len() != dim) {
            return Err(LmError::Protocol("embedding dimension differs within a batch".into()));
        }
        Ok(out)
    }
}

impl<P: ScoringProvider> ScoringProvider for Gateway<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn perplexity(&self, text: &str) -> Result<f64, LmError> {
        if text.is_empty() {
            return Err(LmError::InvalidRequest("cannot score an empty text".into()));
        }
        let key = cache_key(self.inner.id(), "perplexity", &json!(text));
        if let Some(ppl) = self.cache.get(&key).and_then(|s| s.parse::<f64>().ok()) {
            return Ok(ppl);
        }
        let ppl = self.call(self.inner.id(), || self.inner.perplexity(text))?;
        if !(ppl.is_finite() && ppl > 0.0) {
            return Err(LmError::Protocol(format!("perplexity {ppl} is not a positive real")));
        }
        self.remember(&key, &format!("{ppl:?}"));
        Ok(ppl)
    }
}
