//! JSON-over-HTTP client for external model servers.
//!
//! `POST /answer {"question","context"} -> {"answer": string|null, "score"}`,
//! `POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}`,
//! `GET /healthz -> {"status":"ok","dim"}`.

use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use ureq::Agent;

use super::{AnswerOutcome, AnswerSpan, Answerer, BackendError, Embedder, EmbeddingVector};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Deserialize)]
struct AnswerResponse {
    answer: Option<String>,
    score: f64,
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct HealthResponse {
    status: String,
    #[serde(default)]
    dim: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
}

#[derive(Debug, Clone)]
struct Client {
    base: String,
    agent: Agent,
}

impl Client {
    fn new(base: &str, timeout: Duration) -> Self {
        let config = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Client {
            base: base.trim_end_matches('/').to_string(),
            agent: config.into(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn read<T: for<'de> Deserialize<'de>>(
        resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T, BackendError> {
        let mut resp = resp.map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            let message = serde_json::from_str::<ErrorBody>(&body)
                .map(|e| e.error)
                .unwrap_or(body);
            return Err(BackendError::Status { status, message });
        }
        serde_json::from_str(&body).map_err(|e| BackendError::Schema(e.to_string()))
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: serde_json::Value) -> Result<T, BackendError> {
        Self::read(self.agent.post(&self.url(path)).send_json(body))
    }

    fn health(&self) -> Result<HealthResponse, BackendError> {
        let h: HealthResponse = Self::read(self.agent.get(&self.url("/healthz")).call())?;
        if h.status != "ok" {
            return Err(BackendError::Schema(format!("health status {:?}", h.status)));
        }
        Ok(h)
    }
}

/// Extractive answers from a model server. Returned spans are re-anchored at
/// the first occurrence of the answer text in the context.
#[derive(Debug, Clone)]
pub struct RemoteAnswerer {
    client: Client,
}

impl RemoteAnswerer {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        RemoteAnswerer {
            client: Client::new(base_url, timeout),
        }
    }

    pub fn check_health(&self) -> Result<(), BackendError> {
        self.client.health().map(drop)
    }
}

impl Answerer for RemoteAnswerer {
    fn id(&self) -> &str {
        &self.client.base
    }

    fn answer(&self, question: &str, context: &str) -> Result<AnswerOutcome, BackendError> {
        let resp: AnswerResponse = self
            .client
            .post("/answer", json!({ "question": question, "context": context }))?;
        if !resp.score.is_finite() || resp.score < 0.0 {
            return Err(BackendError::Schema(format!("score {} is not a finite non-negative number", resp.score)));
        }
        match resp.answer {
            None => Ok(AnswerOutcome::NoAnswer { score: resp.score }),
            Some(text) if text.is_empty() => Ok(AnswerOutcome::NoAnswer { score: resp.score }),
            Some(text) => {
                // The answer text is deliberately left out of the message.
                let start = context
                    .find(&text)
                    .ok_or_else(|| BackendError::Schema("answer text does not occur in context".into()))?;
                Ok(AnswerOutcome::Answer(AnswerSpan {
                    start,
                    end: start + text.len(),
                    text,
                    confidence: resp.score,
                }))
            }
        }
    }
}

/// Sentence embeddings from a model server. The first response fixes the
/// dimension; any later change is reported as drift.
#[derive(Debug)]
pub struct RemoteEmbedder {
    client: Client,
    dim: Mutex<Option<usize>>,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        RemoteEmbedder {
            client: Client::new(base_url, timeout),
            dim: Mutex::new(None),
        }
    }

    /// Queries `/healthz` and pins the advertised dimension.
    pub fn check_health(&self) -> Result<Option<usize>, BackendError> {
        let h = self.client.health()?;
        if let Some(d) = h.dim {
            self.pin_dim(d)?;
        }
        Ok(h.dim)
    }

    pub fn dim(&self) -> Option<usize> {
        *self.dim.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn pin_dim(&self, got: usize) -> Result<(), BackendError> {
        let mut dim = self.dim.lock().unwrap_or_else(|e| e.into_inner());
        match *dim {
            Some(expected) if expected != got => Err(BackendError::DimensionDrift { expected, got }),
            Some(_) => Ok(()),
            None => {
                *dim = Some(got);
                Ok(())
            }
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.client.base
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp: EmbedResponse = self.client.post("/embed", json!({ "texts": texts }))?;
        if resp.vectors.len() != texts.len() {
            return Err(BackendError::Schema(format!(
                "{} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        let Some(first) = resp.vectors.first().map(Vec::len) else {
            return Ok(Vec::new());
        };
        if let Some(v) = resp.vectors.iter().find(|v| v.len() != first) {
            return Err(BackendError::Schema(format!("ragged vectors: {} and {}", first, v.len())));
        }
        if first < 1 {
            return Err(BackendError::Schema("zero-length vectors".into()));
        }
        self.pin_dim(first)?;
        resp.vectors.into_iter().map(EmbeddingVector::new).collect()
    }
}
