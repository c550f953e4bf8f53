//! Deterministic offline providers for tests, demos and `--mock` runs.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, GenerationParams, GenerationProvider, LmError, ScoringProvider};

/// Backend call accounting shared by the mocks.
#[derive(Debug, Default)]
pub struct CallStats {
    calls: AtomicUsize,
    items: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl CallStats {
    /// Backend invocations.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Items processed across invocations (texts for embedders).
    pub fn items(&self) -> usize {
        self.items.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneously running invocations observed.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn enter(&self, items: usize) -> InFlight<'_> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.items.fetch_add(items, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        InFlight(self)
    }
}

struct InFlight<'a>(&'a CallStats);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

fn seed_from(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

const MODIFIERS: [&str; 40] = [
    "subtle", "explicit", "coded", "casual", "organized", "anonymous", "public", "private",
    "online", "offline", "political", "religious", "economic", "social", "cultural", "historical",
    "local", "global", "visual", "verbal", "implicit", "aggressive", "passive", "sarcastic",
    "ironic", "emotional", "technical", "legal", "medical", "urban", "rural", "youth",
    "elderly", "regional", "seasonal", "digital", "physical", "collective", "personal", "institutional",
];

const NOUNS: [&str; 40] = [
    "bias", "stereotype", "slang", "humor", "threat", "insult", "rumor", "campaign",
    "community", "identity", "language", "image", "symbol", "meme", "protest", "policy",
    "movement", "debate", "narrative", "behavior", "norm", "conflict", "incident", "practice",
    "emotion", "expression", "tradition", "event", "group", "platform", "message", "context",
    "value", "belief", "argument", "opinion", "reaction", "pressure", "risk", "change",
];

/// Number requested by a "List N ..." or "Write N ..." instruction.
fn requested_count(prompt: &str) -> Option<usize> {
    for verb in ["List ", "Write "] {
        for (pos, _) in prompt.match_indices(verb) {
            let digits: String = prompt[pos + verb.len()..]
                .chars()
                .take_while(char::is_ascii_digit)
                .collect();
            if let Ok(n) = digits.parse() {
                return Some(n);
            }
        }
    }
    None
}

/// Text generator whose output is a pure function of the prompt.
///
/// Unless a rule matches, it answers a "List N ..." prompt with N distinct
/// two-word concepts drawn from a fixed vocabulary, seeded by the prompt hash,
/// formatted as a JSON list followed by a closing fence.
#[derive(Debug, Default)]
pub struct MockGenerator {
    rules: Vec<(String, String)>,
    failures: Mutex<VecDeque<Option<u16>>>,
    latency: Option<Duration>,
    stats: CallStats,
}

impl MockGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Responds with `response` to any prompt containing `needle`. Rules are
    /// checked in insertion order.
    pub fn with_rule(mut self, needle: &str, response: &str) -> Self {
        self.rules.push((needle.to_string(), response.to_string()));
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Makes the next `n` calls fail with a transient error.
    pub fn fail_next(&self, n: usize, status: Option<u16>) {
        let mut failures = self.failures.lock().expect("mock lock");
        failures.extend(std::iter::repeat_n(status, n));
    }

    pub fn stats(&self) -> &CallStats {
        &self.stats
    }

    /// The default response for `prompt`, ignoring rules.
    pub fn default_response(prompt: &str) -> String {
        let n = requested_count(prompt).unwrap_or(5).min(MODIFIERS.len() * NOUNS.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed_from(prompt));
        let mut picked: Vec<(u32, u32)> = Vec::with_capacity(n);
        while picked.len() < n {
            let pair = (
                rng.gen_range(0..MODIFIERS.len() as u32),
                rng.gen_range(0..NOUNS.len() as u32),
            );
            if !picked.contains(&pair) {
                picked.push(pair);
            }
        }
        let labels: Vec<String> = picked
            .into_iter()
            .map(|(m, n)| format!("{} {}", MODIFIERS[m as usize], NOUNS[n as usize]))
            .collect();
        format!("{}\n'''", serde_json::to_string(&labels).expect("strings serialize"))
    }
}

impl GenerationProvider for MockGenerator {
    fn id(&self) -> &str {
        "mock-generator"
    }

    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<String, LmError> {
        let _guard = self.stats.enter(1);
        if let Some(latency) = self.latency {
            std::thread::sleep(latency);
        }
        if let Some(status) = self.failures.lock().expect("mock lock").pop_front() {
            return Err(LmError::Transient {
                status,
                message: "scripted failure".into(),
            });
        }
        for (needle, response) in &self.rules {
            if prompt.contains(needle.as_str()) {
                return Ok(response.clone());
            }
        }
        Ok(Self::default_response(prompt))
    }
}

/// Bag-of-words hash embedding: each word maps to a fixed pseudo-random
/// direction and a text embeds as the normalized sum of its words, so texts
/// sharing words are close.
#[derive(Debug)]
pub struct HashEmbedder {
    dim: usize,
    batch_limit: usize,
    overrides: HashMap<String, Vec<f64>>,
    stats: CallStats,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            batch_limit: 1000,
            overrides: HashMap::new(),
            stats: CallStats::default(),
        }
    }

    pub fn with_batch_limit(mut self, limit: usize) -> Self {
        self.batch_limit = limit.max(1);
        self
    }

    /// Pins the (unnormalized) vector for an exact text.
    pub fn with_vector(mut self, text: &str, vector: Vec<f64>) -> Self {
        assert_eq!(vector.len(), self.dim, "override dimension");
        self.overrides.insert(text.to_string(), vector);
        self
    }

    pub fn stats(&self) -> &CallStats {
        &self.stats
    }

    fn direction(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_from(token));
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        if let Some(v) = self.overrides.get(text) {
            return v.clone();
        }
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        let mut sum = vec![0.0; self.dim];
        if tokens.is_empty() {
            sum = self.direction(&lower);
        }
        for token in tokens {
            for (s, d) in sum.iter_mut().zip(self.direction(token)) {
                *s += d;
            }
        }
        let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        sum.iter().map(|x| x / norm).collect()
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn id(&self) -> &str {
        "mock-hash-embedder"
    }

    fn max_batch(&self) -> usize {
        self.batch_limit
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LmError> {
        let _guard = self.stats.enter(texts.len());
        if texts.len() > self.batch_limit {
            return Err(LmError::InvalidRequest("batch exceeds limit".into()));
        }
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Gives every distinct text its own basis vector, so all distinct texts are
/// mutually orthogonal. Assignment follows first-seen order.
#[derive(Debug)]
pub struct OrthogonalEmbedder {
    dim: usize,
    assigned: Mutex<HashMap<String, usize>>,
    stats: CallStats,
}

impl OrthogonalEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            assigned: Mutex::new(HashMap::new()),
            stats: CallStats::default(),
        }
    }

    pub fn stats(&self) -> &CallStats {
        &self.stats
    }
}

impl EmbeddingProvider for OrthogonalEmbedder {
    fn id(&self) -> &str {
        "mock-orthogonal-embedder"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LmError> {
        let _guard = self.stats.enter(texts.len());
        let mut assigned = self.assigned.lock().expect("mock lock");
        texts
            .iter()
            .map(|t| {
                let next = assigned.len();
                let slot = *assigned.entry(t.clone()).or_insert(next);
                if slot >= self.dim {
                    return Err(LmError::Protocol(format!(
                        "orthogonal embedder exhausted its {} dimensions",
                        self.dim
                    )));
                }
                let mut v = vec![0.0; self.dim];
                v[slot] = 1.0;
                Ok(v)
            })
            .collect()
    }
}

/// Scorer with perplexity `exp(chars(text) mod 7 + 1)` unless overridden.
#[derive(Debug, Default)]
pub struct MockScorer {
    overrides: HashMap<String, f64>,
    stats: CallStats,
}

impl MockScorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_perplexity(mut self, text: &str, perplexity: f64) -> Self {
        self.overrides.insert(text.to_string(), perplexity);
        self
    }

    pub fn stats(&self) -> &CallStats {
        &self.stats
    }

    pub fn formula(text: &str) -> f64 {
        ((text.chars().count() % 7) as f64 + 1.0).exp()
    }
}

impl ScoringProvider for MockScorer {
    fn id(&self) -> &str {
        "mock-scorer"
    }

    fn perplexity(&self, text: &str) -> Result<f64, LmError> {
        let _guard = self.stats.enter(1);
        Ok(self
            .overrides
            .get(text)
            .copied()
            .unwrap_or_else(|| Self::formula(text)))
    }
}
