//! OpenAI-compatible HTTP backends (chat/completions, completions with
//! log-probabilities, embeddings).

use std::time::Duration;

use serde_json::{json, Value};

use super::{perplexity_from_logprobs, EmbeddingProvider, GenerationParams, GenerationProvider, LmError, ScoringProvider};

pub const API_KEY_ENV: &str = "WEAVER_API_KEY";

#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl OpenAiConfig {
    /// Reads the API key from `WEAVER_API_KEY`.
    pub fn from_env(base_url: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone)]
struct Client {
    agent: ureq::Agent,
    config: OpenAiConfig,
}

impl Client {
    fn new(config: OpenAiConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, config }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, LmError> {
        let url = format!("{}{}", self.config.base_url, path);
        let mut request = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let response = request.send_json(body).map_err(|e| LmError::Transient {
            status: None,
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| LmError::Transient {
                status: Some(status),
                message: e.to_string(),
            })?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| LmError::Protocol(format!("invalid JSON from {url}: {e}"))),
            408 | 429 | 500..=599 => Err(LmError::Transient {
                status: Some(status),
                message: text,
            }),
            _ => Err(LmError::Backend {
                status,
                message: text,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompletionStyle {
    /// `messages` in, `choices[0].message.content` out.
    Chat,
    /// `prompt` in, `choices[0].text` out.
    Completions,
}

#[derive(Debug, Clone)]
pub struct OpenAiGenerator {
    client: Client,
    path: String,
    style: CompletionStyle,
    id: String,
}

impl OpenAiGenerator {
    pub fn new(config: OpenAiConfig, path: &str, style: CompletionStyle) -> Self {
        let id = format!("openai:{}{}", config.base_url, path);
        Self {
            client: Client::new(config),
            path: path.to_string(),
            style,
            id,
        }
    }

    pub fn chat(config: OpenAiConfig) -> Self {
        Self::new(config, "/v1/chat/completions", CompletionStyle::Chat)
    }
}

impl GenerationProvider for OpenAiGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, LmError> {
        let mut body = json!({
            "model": params.model,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        match self.style {
            CompletionStyle::Chat => body["messages"] = json!([{ "role": "user", "content": prompt }]),
            CompletionStyle::Completions => body["prompt"] = json!(prompt),
        }
        if !params.stop.is_empty() {
            body["stop"] = json!(params.stop);
        }
        let response = self.client.post(&self.path, &body)?;
        let choice = &response["choices"][0];
        let text = match self.style {
            CompletionStyle::Chat => choice["message"]["content"].as_str(),
            CompletionStyle::Completions => choice["text"].as_str(),
        };
        text.map(str::to_string)
            .ok_or_else(|| LmError::Protocol("response has no completion text".into()))
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiEmbedder {
    client: Client,
    model: String,
    path: String,
    batch: usize,
    id: String,
}

impl OpenAiEmbedder {
    pub fn new(config: OpenAiConfig, model: &str) -> Self {
        let path = "/v1/embeddings".to_string();
        let id = format!("openai:{}{}:{model}", config.base_url, path);
        Self {
            client: Client::new(config),
            model: model.to_string(),
            path,
            batch: 1000,
            id,
        }
    }

    pub fn with_path(mut self, path: &str) -> Self {
        self.id = format!("openai:{}{}:{}", self.client.config.base_url, path, self.model);
        self.path = path.to_string();
        self
    }

    pub fn with_batch_limit(mut self, batch: usize) -> Self {
        self.batch = batch.max(1);
        self
    }
}

impl EmbeddingProvider for OpenAiEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn max_batch(&self) -> usize {
        self.batch
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LmError> {
        let response = self
            .client
            .post(&self.path, &json!({ "model": self.model, "input": texts }))?;
        let data = response["data"]
            .as_array()
            .ok_or_else(|| LmError::Protocol("embedding response has no data array".into()))?;
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
            let vector: Vec<f64> = item["embedding"]
                .as_array()
                .ok_or_else(|| LmError::Protocol("embedding entry has no vector".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| LmError::Protocol("non-numeric embedding".into())))
                .collect::<Result<_, _>>()?;
            let slot = out
                .get_mut(index)
                .ok_or_else(|| LmError::Protocol(format!("embedding index {index} out of range")))?;
            *slot = Some(vector);
        }
        out.into_iter()
            .map(|v| v.ok_or_else(|| LmError::Protocol("missing embedding in response".into())))
            .collect()
    }
}

/// Perplexity from a completions endpoint that echoes prompt log-probabilities.
#[derive(Debug, Clone)]
pub struct OpenAiScorer {
    client: Client,
    model: String,
    path: String,
    id: String,
}

impl OpenAiScorer {
    /// Builds the scorer and checks once that the backend returns per-token
    /// log-probabilities for echoed prompts.
    pub fn connect(config: OpenAiConfig, model: &str) -> Result<Self, LmError> {
        Self::connect_with_path(config, model, "/v1/completions")
    }

    pub fn connect_with_path(config: OpenAiConfig, model: &str, path: &str) -> Result<Self, LmError> {
        let id = format!("openai:{}{}:{model}", config.base_url, path);
        let scorer = Self {
            client: Client::new(config),
            model: model.to_string(),
            path: path.to_string(),
            id,
        };
        match scorer.token_logprobs("capability probe") {
            Ok(_) => Ok(scorer),
            Err(LmError::Protocol(msg)) => Err(LmError::Capability(format!(
                "{} does not return token log-probabilities: {msg}",
                scorer.id
            ))),
            Err(other) => Err(other),
        }
    }

    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>, LmError> {
        let body = json!({
            "model": self.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        });
        let response = self.client.post(&self.path, &body)?;
        let values = response["choices"][0]["logprobs"]["token_logprobs"]
            .as_array()
            .ok_or_else(|| LmError::Protocol("no token_logprobs in response".into()))?;
        // The first token has no conditional probability and comes back null.
        Ok(values.iter().filter_map(Value::as_f64).collect())
    }
}

impl ScoringProvider for OpenAiScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn perplexity(&self, text: &str) -> Result<f64, LmError> {
        perplexity_from_logprobs(&self.token_logprobs(text)?)
    }
}
