//! Answerer and embedder contracts with deterministic built-in
//! implementations and an HTTP adapter for external model servers.

mod embed;
mod lexical;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{build_idf, cosine, cosine_slices, embed, fnv1a64, tokenize, token_spans, HashedTfIdfEmbedder, IdfTable, TokenSpan, DEFAULT_DIM};
pub use lexical::{lexical_answer, LexicalAnswerer, LENGTH_PENALTY, MAX_WINDOW, NO_ANSWER_SIMILARITY};
pub use remote::{RemoteAnswerer, RemoteEmbedder, DEFAULT_TIMEOUT};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("server returned status {status}: {message}")]
    Status { status: u16, message: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("embedding dimension changed from {expected} to {got}")]
    DimensionDrift { expected: usize, got: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("corpus has no passages")]
    EmptyCorpus,
}

impl BackendError {
    /// True when the backend could not be reached or refused to serve.
    pub fn is_unavailable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::Status { .. })
    }
}

/// An extractive span; `start..end` are byte offsets into the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnswerOutcome {
    Answer(AnswerSpan),
    /// `score` is the best evidence seen before giving up.
    NoAnswer { score: f64 },
}

impl AnswerOutcome {
    pub fn text(&self) -> Option<&str> {
        match self {
            AnswerOutcome::Answer(a) => Some(&a.text),
            AnswerOutcome::NoAnswer { .. } => None,
        }
    }

    pub fn is_answer(&self) -> bool {
        matches!(self, AnswerOutcome::Answer(_))
    }
}

/// A fixed-length vector of finite components.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self, BackendError> {
        if let Some(i) = components.iter().position(|c| !c.is_finite()) {
            return Err(BackendError::Schema(format!("non-finite embedding component at {i}")));
        }
        Ok(EmbeddingVector(components))
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub trait Answerer: Send + Sync {
    /// Identifier reported in experiment summaries.
    fn id(&self) -> &str;

    fn answer(&self, question: &str, context: &str) -> Result<AnswerOutcome, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;

    /// Embeds every text; output order matches input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| BackendError::Schema("embedder returned no vectors".into()))
    }
}

impl<T: Answerer + ?Sized> Answerer for std::sync::Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn answer(&self, question: &str, context: &str) -> Result<AnswerOutcome, BackendError> {
        (**self).answer(question, context)
    }
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        (**self).embed_batch(texts)
    }
}
