//! Destructive baseline: drop every corpus sentence that matches a secret
//! sentence before the QA system ever sees the data.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{cosine_slices, BackendError, Embedder, EmbeddingVector};
use crate::corpus::{Corpus, CorpusError, GoldAnswer, Passage, Question, SecretStore, SentenceSpan};

pub const DEFAULT_REDACT_THRESHOLD: f64 = 0.95;

const EMBED_CHUNK: usize = 512;

#[derive(Debug, Error)]
pub enum RedactError {
    #[error("redaction threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("embedding failed: {0}")]
    Embed(#[from] BackendError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedactionReport {
    pub sentences_total: usize,
    pub sentences_removed: usize,
    /// Only passages that lost at least one sentence.
    pub removed_per_passage: BTreeMap<String, usize>,
    pub comparisons_made: u64,
    pub elapsed: Duration,
    /// Time spent in the pairwise similarity pass alone.
    pub comparison_elapsed: Duration,
}

fn embed_all(embedder: &dyn Embedder, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(EMBED_CHUNK) {
        let vs = embedder.embed_batch(chunk)?;
        if vs.len() != chunk.len() {
            return Err(BackendError::Schema(format!("{} vectors for {} texts", vs.len(), chunk.len())));
        }
        out.extend(vs);
    }
    Ok(out)
}

/// Removes every corpus sentence whose best cosine against any secret
/// sentence reaches `redact_threshold`.
///
/// Survivors are re-joined with single spaces. Passages that lose everything
/// stay in the corpus with empty text, and gold offsets of every affected
/// passage are cleared.
pub fn build_redacted_corpus(
    corpus: &Corpus,
    store: &SecretStore,
    embedder: &dyn Embedder,
    redact_threshold: f64,
) -> Result<(Corpus, RedactionReport), RedactError> {
    if !(redact_threshold > 0.0 && redact_threshold <= 1.0) {
        return Err(RedactError::Threshold(redact_threshold));
    }
    let started = Instant::now();

    let corpus_texts: Vec<&str> = corpus.passages().iter().flat_map(Passage::sentence_texts).collect();
    let secret_texts: Vec<&str> = store
        .entries
        .iter()
        .flat_map(|e| e.sentences.iter().map(|s| s.slice(&e.text)))
        .collect();
    let corpus_vecs = embed_all(embedder, &corpus_texts)?;
    let secret_vecs = embed_all(embedder, &secret_texts)?;
    if let (Some(a), Some(b)) = (corpus_vecs.first(), secret_vecs.first()) {
        if a.dim() != b.dim() {
            return Err(BackendError::DimensionMismatch { left: a.dim(), right: b.dim() }.into());
        }
    }

    let compare_start = Instant::now();
    let drop: Vec<bool> = corpus_vecs
        .par_iter()
        .map(|c| {
            // Every pair is compared, so `comparisons_made` is the work done.
            secret_vecs
                .iter()
                .map(|s| cosine_slices(c.as_slice(), s.as_slice()))
                .fold(f64::NEG_INFINITY, f64::max)
                >= redact_threshold
        })
        .collect();
    let comparison_elapsed = compare_start.elapsed();

    let mut passages = Vec::with_capacity(corpus.passages().len());
    let mut removed_per_passage = BTreeMap::new();
    let mut cursor = 0;
    for p in corpus.passages() {
        let flags = &drop[cursor..cursor + p.sentences.len()];
        cursor += p.sentences.len();
        let removed = flags.iter().filter(|&&d| d).count();
        if removed == 0 {
            passages.push(p.clone());
            continue;
        }
        removed_per_passage.insert(p.id.clone(), removed);
        let mut text = String::new();
        let mut sentences = Vec::new();
        for (s, _) in p.sentences.iter().zip(flags).filter(|(_, &d)| !d) {
            if !text.is_empty() {
                text.push(' ');
            }
            let start = text.len();
            text.push_str(s.slice(&p.text));
            sentences.push(SentenceSpan { start, end: text.len() });
        }
        passages.push(Passage {
            id: p.id.clone(),
            title: p.title.clone(),
            text,
            sentences,
        });
    }

    let questions: Vec<Question> = corpus
        .questions()
        .iter()
        .map(|q| {
            if !removed_per_passage.contains_key(&q.passage_id) {
                return q.clone();
            }
            Question {
                gold_answers: q
                    .gold_answers
                    .iter()
                    .map(|g| GoldAnswer { text: g.text.clone(), offset: None })
                    .collect(),
                ..q.clone()
            }
        })
        .collect();

    let sentences_removed = removed_per_passage.values().sum();
    let report = RedactionReport {
        sentences_total: corpus_texts.len(),
        sentences_removed,
        removed_per_passage,
        comparisons_made: corpus_texts.len() as u64 * secret_texts.len() as u64,
        elapsed: started.elapsed(),
        comparison_elapsed,
    };
    let redacted = Corpus::new(passages, questions)?.mark_redacted();
    Ok((redacted, report))
}
