//! Sanitizing QA service.
//!
//! `POST /ask {"question", "passage_id"?}` answers from the full corpus and
//! runs the keeper on the result. A withheld answer and a genuine abstention
//! produce the same bytes, status and headers. Verdict diagnostics go to an
//! operator-only audit log, never to a response.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use hushqa::backends::cosine;
use hushqa::corpus::{build_secret_store, designate_secrets, load_secret_ids, load_squad};
use hushqa::harness::{Backends, BackendSpec};
use hushqa::keeper::{keep, KeeperError};
use hushqa::{AnswerOutcome, BackendError, Corpus, CorpusError, Decision, EmbeddingVector, RiskProfile, SecretIds, SecretStore};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Body for both withheld and unanswerable questions.
pub const NO_ANSWER_BODY: &str = r#"{"answer":null,"reason":"no_answer"}"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub corpus: PathBuf,
    /// JSON list of secret passage ids; overrides `num_secrets`/`seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub secret_ids: Option<PathBuf>,
    pub num_secrets: usize,
    pub seed: u64,
    pub context_ratio: f64,
    pub threshold: f64,
    pub answerer: BackendSpec,
    pub embedder: BackendSpec,
    pub dim: usize,
    pub bind: String,
    pub request_timeout_secs: u64,
    pub backend_timeout_secs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_log: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            corpus: PathBuf::new(),
            secret_ids: None,
            num_secrets: 8,
            seed: 0,
            context_ratio: 1.0,
            threshold: hushqa::keeper::DEFAULT_THRESHOLD,
            answerer: BackendSpec::Builtin,
            embedder: BackendSpec::Builtin,
            dim: hushqa::backends::DEFAULT_DIM,
            bind: "127.0.0.1:8080".into(),
            request_timeout_secs: 30,
            backend_timeout_secs: 30,
            audit_log: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid gateway config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("backend setup failed: {0}")]
    Backend(#[from] BackendError),
    #[error("audit log: {0}")]
    Audit(io::Error),
    #[error("bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("server: {0}")]
    Serve(io::Error),
}

#[derive(Debug, Default, Serialize)]
pub struct Counters {
    pub released: u64,
    pub withheld: u64,
    pub no_answer: u64,
    pub errors: u64,
}

#[derive(Default)]
struct AtomicCounters {
    released: AtomicU64,
    withheld: AtomicU64,
    no_answer: AtomicU64,
    errors: AtomicU64,
}

#[derive(Serialize)]
struct AuditLine<'a> {
    unix_ms: u128,
    passage_id: &'a str,
    decision: &'a str,
    max_similarity: f64,
    threshold: f64,
    /// Passage id of the matching secret, never its text.
    matched_secret: Option<&'a str>,
}

/// Loaded corpus, secret store and backends; shared immutably by handlers.
pub struct Gateway {
    corpus: Corpus,
    store: SecretStore,
    passage_vectors: Vec<EmbeddingVector>,
    backends: Backends,
    profile: RiskProfile,
    request_timeout: Duration,
    audit: Option<Mutex<BufWriter<File>>>,
    counters: AtomicCounters,
}

/// Outcome of one question, before it is turned into a response.
#[derive(Debug, Clone, PartialEq)]
pub enum AskOutcome {
    Released { answer: String, score: f64 },
    /// Withheld and unanswerable questions are deliberately merged.
    NoAnswer,
}

#[derive(Debug, Error)]
pub enum AskError {
    #[error("malformed request")]
    Malformed,
    #[error("unknown passage")]
    UnknownPassage,
    #[error("backend unavailable")]
    Unavailable,
    #[error("internal error")]
    Internal,
}

impl AskError {
    fn status(&self) -> StatusCode {
        match self {
            AskError::Malformed => StatusCode::BAD_REQUEST,
            AskError::UnknownPassage => StatusCode::NOT_FOUND,
            AskError::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            AskError::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn from_backend(e: &BackendError) -> Self {
        if e.is_unavailable() {
            AskError::Unavailable
        } else {
            AskError::Internal
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AskRequest {
    question: String,
    #[serde(default)]
    passage_id: Option<String>,
}

impl Gateway {
    /// Builds the service from an in-memory corpus.
    pub fn new(
        corpus: Corpus,
        secret_ids: &SecretIds,
        context_ratio: f64,
        profile: RiskProfile,
        backends: Backends,
    ) -> Result<Self, GatewayError> {
        let store = build_secret_store(&corpus, secret_ids, context_ratio)?;
        let texts: Vec<&str> = corpus.passages().iter().map(|p| p.text.as_str()).collect();
        let passage_vectors = if texts.is_empty() { Vec::new() } else { backends.embedder.embed_batch(&texts)? };
        if passage_vectors.len() != texts.len() {
            return Err(BackendError::Schema(format!("{} vectors for {} passages", passage_vectors.len(), texts.len())).into());
        }
        Ok(Gateway {
            corpus,
            store,
            passage_vectors,
            backends,
            profile,
            request_timeout: Duration::from_secs(30),
            audit: None,
            counters: AtomicCounters::default(),
        })
    }

    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        if config.request_timeout_secs == 0 || config.backend_timeout_secs == 0 {
            return Err(GatewayError::Config("timeouts must be positive".into()));
        }
        if config.dim < 2 {
            return Err(GatewayError::Config(format!("dim {} below 2", config.dim)));
        }
        let profile = RiskProfile::new(config.threshold).map_err(|e| GatewayError::Config(e.to_string()))?;
        let corpus = load_squad(&config.corpus)?;
        let secret_ids = match &config.secret_ids {
            Some(path) => load_secret_ids(path, &corpus)?,
            None => designate_secrets(&corpus, config.num_secrets, config.seed)?,
        };
        let backends = Backends::from_specs(
            &config.answerer,
            &config.embedder,
            &corpus,
            config.dim,
            Duration::from_secs(config.backend_timeout_secs),
        )?;
        let gateway = Gateway::new(corpus, &secret_ids, config.context_ratio, profile, backends)?
            .with_request_timeout(Duration::from_secs(config.request_timeout_secs));
        match &config.audit_log {
            Some(path) => gateway.with_audit_log(path),
            None => Ok(gateway),
        }
    }

    pub fn with_request_timeout(mut self, timeout: Duration) -> Self {
        self.request_timeout = timeout;
        self
    }

    /// Appends verdict lines to `path`, creating it if needed.
    pub fn with_audit_log(mut self, path: &std::path::Path) -> Result<Self, GatewayError> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(GatewayError::Audit)?;
        self.audit = Some(Mutex::new(BufWriter::new(file)));
        Ok(self)
    }

    pub fn passages(&self) -> usize {
        self.corpus.passages().len()
    }

    pub fn secrets(&self) -> usize {
        self.store.len()
    }

    pub fn counters(&self) -> Counters {
        Counters {
            released: self.counters.released.load(Ordering::Relaxed),
            withheld: self.counters.withheld.load(Ordering::Relaxed),
            no_answer: self.counters.no_answer.load(Ordering::Relaxed),
            errors: self.counters.errors.load(Ordering::Relaxed),
        }
    }

    /// Id of the passage most similar to the question; earliest on ties.
    pub fn retrieve(&self, question: &str) -> Result<Option<&str>, AskError> {
        Ok(self.nearest(question)?.map(|i| self.corpus.passages()[i].id.as_str()))
    }

    fn nearest(&self, question: &str) -> Result<Option<usize>, AskError> {
        if self.passage_vectors.is_empty() {
            return Ok(None);
        }
        let q = self.backends.embedder.embed(question).map_err(|e| AskError::from_backend(&e))?;
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.passage_vectors.iter().enumerate() {
            let sim = cosine(&q, v).map_err(|e| AskError::from_backend(&e))?;
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((i, sim));
            }
        }
        Ok(best.map(|(i, _)| i))
    }

    /// Answers one question. Blocking; backends may do network I/O.
    pub fn ask(&self, question: &str, passage_id: Option<&str>) -> Result<AskOutcome, AskError> {
        let result = self.ask_inner(question, passage_id);
        if result.is_err() {
            self.counters.errors.fetch_add(1, Ordering::Relaxed);
        }
        result
    }

    fn ask_inner(&self, question: &str, passage_id: Option<&str>) -> Result<AskOutcome, AskError> {
        if question.trim().is_empty() {
            return Err(AskError::Malformed);
        }
        let index = match passage_id {
            Some(id) => Some(self.corpus.passage_index(id).ok_or(AskError::UnknownPassage)?),
            None => self.nearest(question)?,
        };
        let Some(index) = index else {
            self.counters.no_answer.fetch_add(1, Ordering::Relaxed);
            return Ok(AskOutcome::NoAnswer);
        };
        let passage = &self.corpus.passages()[index];
        let qa = self
            .backends
            .answerer
            .answer(question, &passage.text)
            .map_err(|e| {
                tracing::warn!(passage = %passage.id, error = %e, "answerer failed");
                AskError::from_backend(&e)
            })?;
        if !qa.is_answer() {
            self.audit(&passage.id, "no_answer", 0.0, None);
            self.counters.no_answer.fetch_add(1, Ordering::Relaxed);
            return Ok(AskOutcome::NoAnswer);
        }
        let verdict = keep(
            question,
            qa,
            &self.store,
            self.backends.embedder.as_ref(),
            self.backends.answerer.as_ref(),
            self.profile,
        )
        .map_err(|e: KeeperError| {
            tracing::warn!(passage = %passage.id, "keeper failed");
            e.backend().map_or(AskError::Internal, AskError::from_backend)
        })?;
        match (verdict.decision, verdict.qa_answer) {
            (Decision::Withheld, _) => {
                self.audit(&passage.id, "withheld", verdict.max_similarity, verdict.matched_secret.as_deref());
                self.counters.withheld.fetch_add(1, Ordering::Relaxed);
                Ok(AskOutcome::NoAnswer)
            }
            (Decision::Released, AnswerOutcome::Answer(span)) => {
                self.audit(&passage.id, "released", verdict.max_similarity, None);
                self.counters.released.fetch_add(1, Ordering::Relaxed);
                Ok(AskOutcome::Released {
                    answer: span.text,
                    score: span.confidence,
                })
            }
            (Decision::Released, AnswerOutcome::NoAnswer { .. }) => unreachable!("answer checked above"),
        }
    }

    fn audit(&self, passage_id: &str, decision: &str, max_similarity: f64, matched_secret: Option<&str>) {
        let Some(log) = &self.audit else { return };
        let line = AuditLine {
            unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
            passage_id,
            decision,
            max_similarity,
            threshold: self.profile.threshold(),
            matched_secret,
        };
        let mut w = log.lock().unwrap_or_else(|e| e.into_inner());
        let written = serde_json::to_writer(&mut *w, &line)
            .map_err(io::Error::other)
            .and_then(|_| w.write_all(b"\n"))
            .and_then(|_| w.flush());
        if let Err(e) = written {
            tracing::error!(error = %e, "audit log write failed");
        }
    }

    pub fn flush_audit(&self) -> io::Result<()> {
        match &self.audit {
            Some(log) => log.lock().unwrap_or_else(|e| e.into_inner()).flush(),
            None => Ok(()),
        }
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(e: AskError) -> Response {
    // Fixed messages only: nothing from the request or the backends.
    json_response(e.status(), json!({ "error": e.to_string() }).to_string())
}

async fn ask(State(gw): State<Arc<Gateway>>, body: Bytes) -> Response {
    let Ok(req) = serde_json::from_slice::<AskRequest>(&body) else {
        return error_response(AskError::Malformed);
    };
    let timeout = gw.request_timeout;
    let worker = gw.clone();
    let job = tokio::task::spawn_blocking(move || worker.ask(&req.question, req.passage_id.as_deref()));
    let outcome = match tokio::time::timeout(timeout, job).await {
        Ok(Ok(r)) => r,
        Ok(Err(_)) => Err(AskError::Internal),
        Err(_) => {
            gw.counters.errors.fetch_add(1, Ordering::Relaxed);
            Err(AskError::Unavailable)
        }
    };
    match outcome {
        Ok(AskOutcome::Released { answer, score }) => {
            json_response(StatusCode::OK, json!({ "answer": answer, "score": score }).to_string())
        }
        Ok(AskOutcome::NoAnswer) => json_response(StatusCode::OK, NO_ANSWER_BODY.to_string()),
        Err(e) => error_response(e),
    }
}

async fn healthz(State(gw): State<Arc<Gateway>>) -> Response {
    json_response(
        StatusCode::OK,
        json!({ "status": "ok", "passages": gw.passages(), "secrets": gw.secrets() }).to_string(),
    )
}

async fn metrics(State(gw): State<Arc<Gateway>>) -> Response {
    json_response(StatusCode::OK, serde_json::to_string(&gw.counters()).expect("counters serialize"))
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/ask", post(ask))
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics))
        .with_state(gateway)
}

/// Serves on an already bound listener until `shutdown` resolves, then
/// flushes the audit log.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), GatewayError> {
    axum::serve(listener, router(gateway.clone()))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(GatewayError::Serve)?;
    gateway.flush_audit().map_err(GatewayError::Audit)
}

/// Binds `config.bind` and serves until interrupted.
pub async fn serve(config: GatewayConfig) -> Result<(), GatewayError> {
    let cfg = config.clone();
    let gateway = tokio::task::spawn_blocking(move || Gateway::from_config(&cfg))
        .await
        .map_err(|e| GatewayError::Config(e.to_string()))??;
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|source| GatewayError::Bind { addr: config.bind.clone(), source })?;
    let addr: SocketAddr = listener.local_addr().map_err(GatewayError::Serve)?;
    tracing::info!(%addr, passages = gateway.passages(), secrets = gateway.secrets(), "gateway listening");
    eprintln!("listening on http://{addr}");
    serve_on(listener, Arc::new(gateway), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
