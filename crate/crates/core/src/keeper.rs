//! Output sanitization: withhold a QA answer when it resembles what the
//! secret context says about the same question.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{cosine, AnswerOutcome, Answerer, BackendError, Embedder};
use crate::corpus::SecretStore;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum KeeperError {
    #[error("secret answerer failed on {passage_id}: {source}")]
    Answer {
        passage_id: String,
        #[source]
        source: BackendError,
    },
    #[error("embedding failed: {0}")]
    Embed(#[source] BackendError),
    #[error("risk threshold must be finite, got {0}")]
    Threshold(f64),
}

impl KeeperError {
    pub fn backend(&self) -> Option<&BackendError> {
        match self {
            KeeperError::Answer { source, .. } | KeeperError::Embed(source) => Some(source),
            KeeperError::Threshold(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Released,
    Withheld,
}

/// Deployer-chosen withholding strictness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    threshold: f64,
}

impl RiskProfile {
    pub fn new(threshold: f64) -> Result<Self, KeeperError> {
        if threshold.is_finite() {
            Ok(RiskProfile { threshold })
        } else {
            Err(KeeperError::Threshold(threshold))
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

impl Default for RiskProfile {
    fn default() -> Self {
        RiskProfile {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecretAnswer {
    pub passage_id: String,
    pub outcome: AnswerOutcome,
    /// Cosine against the QA answer; `None` when either side had no answer.
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub qa_answer: AnswerOutcome,
    pub sk_answers: Vec<SecretAnswer>,
    pub max_similarity: f64,
    pub threshold: f64,
    pub matched_secret: Option<String>,
}

impl Verdict {
    pub fn is_withheld(&self) -> bool {
        self.decision == Decision::Withheld
    }

    fn released(qa_answer: AnswerOutcome, sk_answers: Vec<SecretAnswer>, max_similarity: f64, threshold: f64) -> Self {
        Verdict {
            decision: Decision::Released,
            qa_answer,
            sk_answers,
            max_similarity,
            threshold,
            matched_secret: None,
        }
    }
}

/// Asks `question` of every secret entry separately, in entry order.
pub fn secret_answers(
    question: &str,
    store: &SecretStore,
    answerer: &dyn Answerer,
) -> Result<Vec<SecretAnswer>, KeeperError> {
    store
        .entries
        .iter()
        .map(|e| {
            let outcome = answerer
                .answer(question, &e.text)
                .map_err(|source| KeeperError::Answer {
                    passage_id: e.passage_id.clone(),
                    source,
                })?;
            Ok(SecretAnswer {
                passage_id: e.passage_id.clone(),
                outcome,
                similarity: None,
            })
        })
        .collect()
}

/// Decides whether `qa_answer` may be released.
///
/// The answer is withheld when its embedding's cosine with some secret
/// answer's embedding is strictly above the profile threshold. Secret entries
/// that produced no answer cannot flag anything, so with no comparable secret
/// answer the verdict is always Released. The question text itself plays no
/// part in the decision.
pub fn keep(
    question: &str,
    qa_answer: AnswerOutcome,
    store: &SecretStore,
    embedder: &dyn Embedder,
    answerer: &dyn Answerer,
    profile: RiskProfile,
) -> Result<Verdict, KeeperError> {
    let threshold = profile.threshold();
    let Some(qa_text) = qa_answer.text().map(str::to_owned) else {
        return Ok(Verdict::released(qa_answer, Vec::new(), 0.0, threshold));
    };
    let mut sk = secret_answers(question, store, answerer)?;

    let comparable: Vec<usize> = (0..sk.len()).filter(|&i| sk[i].outcome.is_answer()).collect();
    if comparable.is_empty() {
        return Ok(Verdict::released(qa_answer, sk, 0.0, threshold));
    }
    let mut texts: Vec<&str> = Vec::with_capacity(comparable.len() + 1);
    texts.push(&qa_text);
    texts.extend(comparable.iter().filter_map(|&i| sk[i].outcome.text()));
    let vectors = embedder.embed_batch(&texts).map_err(KeeperError::Embed)?;
    if vectors.len() != texts.len() {
        return Err(KeeperError::Embed(BackendError::Schema(format!(
            "{} vectors for {} texts",
            vectors.len(),
            texts.len()
        ))));
    }

    let mut best: Option<(usize, f64)> = None;
    for (k, &i) in comparable.iter().enumerate() {
        let sim = cosine(&vectors[0], &vectors[k + 1]).map_err(KeeperError::Embed)?;
        sk[i].similarity = Some(sim);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    let (argmax, max_similarity) = best.expect("comparable is non-empty");
    if max_similarity > threshold {
        Ok(Verdict {
            decision: Decision::Withheld,
            matched_secret: Some(sk[argmax].passage_id.clone()),
            qa_answer,
            sk_answers: sk,
            max_similarity,
            threshold,
        })
    } else {
        Ok(Verdict::released(qa_answer, sk, max_similarity, threshold))
    }
}

/// A keeper bound to its store and backends.
pub struct SecretKeeper<'a> {
    pub store: &'a SecretStore,
    pub embedder: &'a dyn Embedder,
    pub answerer: &'a dyn Answerer,
    pub profile: RiskProfile,
}

impl SecretKeeper<'_> {
    pub fn check(&self, question: &str, qa_answer: AnswerOutcome) -> Result<Verdict, KeeperError> {
        keep(question, qa_answer, self.store, self.embedder, self.answerer, self.profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{AnswerSpan, EmbeddingVector, HashedTfIdfEmbedder, IdfTable, LexicalAnswerer};
    use crate::corpus::{split_sentences, SecretEntry};
    use std::sync::Arc;

    /// Answers with a fixed string per context, or abstains.
    struct Scripted(Vec<(&'static str, Option<&'static str>)>);

    impl Answerer for Scripted {
        fn id(&self) -> &str {
            "scripted"
        }
        fn answer(&self, _q: &str, context: &str) -> Result<AnswerOutcome, BackendError> {
            let hit = self.0.iter().find(|(c, _)| *c == context).and_then(|(_, a)| *a);
            Ok(match hit {
                Some(a) => span(a),
                None => AnswerOutcome::NoAnswer { score: 0.0 },
            })
        }
    }

    struct Failing;

    impl Answerer for Failing {
        fn id(&self) -> &str {
            "failing"
        }
        fn answer(&self, _q: &str, _c: &str) -> Result<AnswerOutcome, BackendError> {
            Err(BackendError::Transport("down".into()))
        }
    }

    fn span(text: &str) -> AnswerOutcome {
        AnswerOutcome::Answer(AnswerSpan {
            text: text.into(),
            start: 0,
            end: text.len(),
            confidence: 1.0,
        })
    }

    fn store(texts: &[&str]) -> SecretStore {
        SecretStore {
            entries: texts
                .iter()
                .enumerate()
                .map(|(i, t)| SecretEntry {
                    passage_id: format!("S#{i}"),
                    text: t.to_string(),
                    sentences: split_sentences(t),
                })
                .collect(),
            context_ratio: 1.0,
        }
    }

    fn unit_embedder() -> HashedTfIdfEmbedder {
        HashedTfIdfEmbedder::new(Arc::new(IdfTable::default()), 256)
    }

    #[test]
    fn exact_collision_is_withheld() {
        let s = store(&["ctx"]);
        let v = keep(
            "What was the name of the Florida Huguenot colony?",
            span("Fort Caroline"),
            &s,
            &unit_embedder(),
            &Scripted(vec![("ctx", Some("Fort Caroline"))]),
            RiskProfile::default(),
        )
        .unwrap();
        assert_eq!(v.decision, Decision::Withheld);
        assert!((v.max_similarity - 1.0).abs() < 1e-12);
        assert_eq!(v.matched_secret.as_deref(), Some("S#0"));
    }

    #[test]
    fn half_overlap_sits_on_the_threshold_and_leaks() {
        // With unit weights "mount kenya" and "mount wilson" share one of two
        // tokens: cosine 1/2, provided "kenya" and "wilson" do not collide.
        let e = unit_embedder();
        let a = e.embed_one("Mount Kenya");
        let b = e.embed_one("Mount Wilson");
        assert_eq!(a.as_slice().iter().filter(|&&x| x != 0.0).count(), 2);
        assert_eq!(b.as_slice().iter().filter(|&&x| x != 0.0).count(), 2);
        let c = cosine(&a, &b).unwrap();
        assert!((c - 0.5).abs() < 1e-12, "{c}");

        let s = store(&["kenya ctx"]);
        let v = keep(
            "What mountain has snow on it all year round?",
            span("Mount Kenya"),
            &s,
            &e,
            &Scripted(vec![("kenya ctx", Some("Mount Wilson"))]),
            RiskProfile::default(),
        )
        .unwrap();
        assert_eq!(v.decision, Decision::Released);
        assert!(v.matched_secret.is_none());
    }

    #[test]
    fn empty_store_and_no_answer_are_released() {
        let e = unit_embedder();
        let empty = SecretStore::empty();
        let v = keep("q", span("x"), &empty, &e, &Failing, RiskProfile::default()).unwrap();
        assert_eq!((v.decision, v.max_similarity), (Decision::Released, 0.0));

        let s = store(&["a"]);
        let v = keep("q", AnswerOutcome::NoAnswer { score: 0.0 }, &s, &e, &Failing, RiskProfile::new(-5.0).unwrap())
            .unwrap();
        assert_eq!(v.decision, Decision::Released);
        assert_eq!(v.max_similarity, 0.0);
    }

    #[test]
    fn negative_threshold_withholds_any_comparable_answer() {
        let s = store(&["a", "b"]);
        let answerer = Scripted(vec![("a", None), ("b", Some("completely unrelated"))]);
        let v = keep("q", span("Mount Kenya"), &s, &unit_embedder(), &answerer, RiskProfile::new(-1.0).unwrap())
            .unwrap();
        assert_eq!(v.decision, Decision::Withheld);
        assert_eq!(v.matched_secret.as_deref(), Some("S#1"));
        assert_eq!(v.sk_answers[0].similarity, None);
    }

    #[test]
    fn ties_go_to_the_earliest_entry() {
        let s = store(&["a", "b", "c"]);
        let answerer = Scripted(vec![("a", Some("nothing")), ("b", Some("Fort Caroline")), ("c", Some("fort caroline"))]);
        let v = keep("q", span("Fort Caroline"), &s, &unit_embedder(), &answerer, RiskProfile::default()).unwrap();
        assert_eq!(v.matched_secret.as_deref(), Some("S#1"));
    }

    #[test]
    fn backend_errors_name_the_passage() {
        let s = store(&["a"]);
        match keep("q", span("x"), &s, &unit_embedder(), &Failing, RiskProfile::default()).unwrap_err() {
            KeeperError::Answer { passage_id, .. } => assert_eq!(passage_id, "S#0"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn secret_answers_cardinality() {
        let idf = Arc::new(IdfTable::default());
        let lex = LexicalAnswerer::new(idf, 256);
        assert!(secret_answers("q", &SecretStore::empty(), &lex).unwrap().is_empty());
        let s = store(&["Alpha beta.", "Gamma delta.", "Epsilon zeta."]);
        let out = secret_answers("What is alpha?", &s, &lex).unwrap();
        let ids: Vec<_> = out.iter().map(|a| a.passage_id.as_str()).collect();
        assert_eq!(ids, ["S#0", "S#1", "S#2"]);
        // Only the first entry shares a token with the question.
        assert!(out[0].outcome.is_answer());
        assert!(!out[1].outcome.is_answer());
    }

    #[test]
    fn rejects_non_finite_threshold() {
        assert!(RiskProfile::new(f64::NAN).is_err());
        assert!(RiskProfile::new(f64::INFINITY).is_err());
    }

    #[test]
    fn short_embedder_output_is_an_error() {
        struct Short;
        impl Embedder for Short {
            fn id(&self) -> &str {
                "short"
            }
            fn embed_batch(&self, _t: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
                Ok(vec![EmbeddingVector::zeros(2)])
            }
        }
        let s = store(&["a"]);
        let r = keep("q", span("x"), &s, &Short, &Scripted(vec![("a", Some("x"))]), RiskProfile::default());
        assert!(matches!(r, Err(KeeperError::Embed(_))));
    }
}
