use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{BackendSpec, ConfigError, Design, ExperimentConfig};
use crate::backends::{
    build_idf, Answerer, BackendError, Embedder, HashedTfIdfEmbedder, LexicalAnswerer, RemoteAnswerer,
    RemoteEmbedder,
};
use crate::corpus::{
    build_secret_store, designate_secrets, sample_eval_set, secret_item_count, strata, Corpus, CorpusError,
};
use crate::keeper::{keep, KeeperError, RiskProfile};
use crate::metrics::{aggregate, judge_record, MetricsReport, OutcomeRecord};
use crate::redactor::{build_redacted_corpus, RedactError, RedactionReport};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("backend setup failed: {0}")]
    Setup(#[source] BackendError),
    #[error("redaction failed: {0}")]
    Redact(#[source] RedactError),
    /// A backend failed mid-run; `partial` holds the records completed
    /// before the first failure, in evaluation order.
    #[error("backend failure on question {question_id}: {message}")]
    Backend {
        question_id: String,
        message: String,
        partial: Vec<OutcomeRecord>,
    },
}

impl ExperimentError {
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            ExperimentError::Setup(_) | ExperimentError::Backend { .. } | ExperimentError::Redact(RedactError::Embed(_))
        )
    }

    pub fn partial_records(&self) -> &[OutcomeRecord] {
        match self {
            ExperimentError::Backend { partial, .. } => partial,
            _ => &[],
        }
    }
}

/// The answerer and embedder an experiment runs against.
#[derive(Clone)]
pub struct Backends {
    pub answerer: Arc<dyn Answerer>,
    pub embedder: Arc<dyn Embedder>,
}

impl Backends {
    /// Lexical answerer and hashed TF-IDF embedder sharing one idf table
    /// built over `corpus`.
    pub fn builtin(corpus: &Corpus, dim: usize) -> Result<Self, BackendError> {
        let idf = Arc::new(build_idf(corpus)?);
        Ok(Backends {
            answerer: Arc::new(LexicalAnswerer::new(idf.clone(), dim)),
            embedder: Arc::new(HashedTfIdfEmbedder::new(idf, dim)),
        })
    }

    /// Remote endpoints are health-checked before use.
    pub fn from_specs(
        answerer: &BackendSpec,
        embedder: &BackendSpec,
        corpus: &Corpus,
        dim: usize,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let needs_idf = matches!(answerer, BackendSpec::Builtin) || matches!(embedder, BackendSpec::Builtin);
        let idf = if needs_idf { Some(Arc::new(build_idf(corpus)?)) } else { None };
        let answerer: Arc<dyn Answerer> = match answerer {
            BackendSpec::Builtin => Arc::new(LexicalAnswerer::new(idf.clone().expect("idf built"), dim)),
            BackendSpec::Remote(url) => {
                let r = RemoteAnswerer::new(url, timeout);
                r.check_health()?;
                Arc::new(r)
            }
        };
        let embedder: Arc<dyn Embedder> = match embedder {
            BackendSpec::Builtin => Arc::new(HashedTfIdfEmbedder::new(idf.expect("idf built"), dim)),
            BackendSpec::Remote(url) => {
                let r = RemoteEmbedder::new(url, timeout);
                r.check_health()?;
                Arc::new(r)
            }
        };
        Ok(Backends { answerer, embedder })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    /// Answerer identifier, reported as the "model" column.
    pub model: String,
    pub records: Vec<OutcomeRecord>,
    pub report: MetricsReport,
    pub redaction: Option<RedactionReport>,
}

/// Largest `n <= requested` for which both strata can supply their share:
/// `round(ratio * n)` secret questions and the rest non-secret.
pub fn feasible_eval_size(secret_available: usize, open_available: usize, requested: usize, ratio: f64) -> usize {
    (0..=requested)
        .rev()
        .find(|&n| {
            let s = secret_item_count(ratio, n);
            s <= secret_available && n - s <= open_available
        })
        .unwrap_or(0)
}

/// Runs one experiment with backends built from the config.
pub fn run_experiment(corpus: &Corpus, config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let backends = Backends::from_specs(
        &config.answerer,
        &config.embedder,
        corpus,
        config.dim,
        Duration::from_secs(config.timeout_secs),
    )
    .map_err(ExperimentError::Setup)?;
    run_experiment_with(corpus, config, &backends)
}

enum StepError {
    Answer(BackendError),
    Keeper(KeeperError),
}

impl std::fmt::Display for StepError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepError::Answer(e) => write!(f, "answerer: {e}"),
            StepError::Keeper(e) => write!(f, "keeper: {e}"),
        }
    }
}

/// Runs one experiment.
///
/// Questions are always asked against their own source passage (redacted
/// for [`Design::SecretRemover`]). The evaluation set is shrunk to the
/// largest size both strata can fill; with no secrets at all, every
/// question is drawn from the open stratum. The report's mean runtime is total
/// wall time, including any one-time redaction, divided by the number of
/// questions.
pub fn run_experiment_with(
    corpus: &Corpus,
    config: &ExperimentConfig,
    backends: &Backends,
) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let started = Instant::now();
    let secret_ids = designate_secrets(corpus, config.num_secrets, config.seed)?;
    let store = build_secret_store(corpus, &secret_ids, config.context_ratio)?;
    let (secret_pool, open_pool) = strata(corpus, &secret_ids);
    // Without secrets no question can target one; evaluate on open ones only.
    let ratio = if secret_pool.is_empty() { 0.0 } else { config.secret_question_ratio };
    let n = feasible_eval_size(secret_pool.len(), open_pool.len(), config.n_questions, ratio);
    if n < config.n_questions {
        tracing::debug!(requested = config.n_questions, n, "evaluation set shrunk to fit strata");
    }
    let eval = sample_eval_set(corpus, &secret_ids, n, ratio, config.seed)?;

    let (redacted, redaction) = if config.design == Design::SecretRemover {
        let (c, r) = build_redacted_corpus(corpus, &store, backends.embedder.as_ref(), config.redact_threshold)
            .map_err(ExperimentError::Redact)?;
        (Some(c), Some(r))
    } else {
        (None, None)
    };
    let qa_corpus = redacted.as_ref().unwrap_or(corpus);
    let profile = RiskProfile::new(config.threshold).map_err(|e| ConfigError(e.to_string()))?;

    let results: Vec<Result<OutcomeRecord, StepError>> = eval
        .items
        .par_iter()
        .map(|&qi| {
            let q = &corpus.questions()[qi];
            let t0 = Instant::now();
            let context = &qa_corpus
                .passage(&q.passage_id)
                .expect("corpus integrity checked at construction")
                .text;
            let qa = backends.answerer.answer(&q.text, context).map_err(StepError::Answer)?;
            let verdict = if config.keeper_enabled() {
                Some(
                    keep(&q.text, qa.clone(), &store, backends.embedder.as_ref(), backends.answerer.as_ref(), profile)
                        .map_err(StepError::Keeper)?,
                )
            } else {
                None
            };
            let mut record = judge_record(q, qa, verdict.as_ref(), &secret_ids);
            record.runtime_us = Some(t0.elapsed().as_micros() as u64);
            Ok(record)
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    for (r, &qi) in results.into_iter().zip(&eval.items) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                return Err(ExperimentError::Backend {
                    question_id: corpus.questions()[qi].id.clone(),
                    message: e.to_string(),
                    partial: records,
                })
            }
        }
    }

    let mut report = aggregate(&records);
    report.mean_runtime_ms = (!records.is_empty())
        .then(|| started.elapsed().as_secs_f64() * 1000.0 / records.len() as f64);
    Ok(ExperimentOutput {
        config: config.clone(),
        model: backends.answerer.id().to_string(),
        records,
        report,
        redaction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasible_sizes() {
        assert_eq!(feasible_eval_size(100, 100, 50, 0.5), 50);
        assert_eq!(feasible_eval_size(5, 300, 100, 1.0), 5);
        assert_eq!(feasible_eval_size(5, 300, 100, 0.5), 10);
        assert_eq!(feasible_eval_size(0, 300, 100, 0.0), 100);
        // No secret questions at all: only sets too small to need one remain.
        assert_eq!(feasible_eval_size(0, 300, 100, 0.25), 1);
        assert_eq!(feasible_eval_size(0, 0, 100, 0.5), 0);
    }
}
