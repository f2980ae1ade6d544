//! Secret keeping for extractive question answering.
//!
//! A QA system answers from the full corpus; a keeper asks the same question
//! of a secrets-only store and withholds the answer when the two answers'
//! embeddings are too similar. The crate also provides the destructive
//! alternative (sentence redaction), the accuracy, paranoia, leakage and
//! secrecy metrics, and a harness that sweeps the number of secrets, the
//! share of secret context available, and the share of questions aimed at
//! secrets.

pub mod backends;
pub mod corpus;
pub mod harness;
pub mod keeper;
pub mod metrics;
pub mod redactor;
pub mod synth;

pub use backends::{AnswerOutcome, AnswerSpan, Answerer, BackendError, Embedder, EmbeddingVector};
pub use corpus::{Corpus, CorpusError, EvalSet, Passage, Question, SecretIds, SecretStore};
pub use harness::{Design, ExperimentConfig, GridSpec};
pub use keeper::{keep, Decision, RiskProfile, Verdict};
pub use metrics::{aggregate, MetricsReport, OutcomeRecord};
pub use redactor::{build_redacted_corpus, RedactionReport};
