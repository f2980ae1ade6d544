//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use hushqa::backends::{build_idf, HashedTfIdfEmbedder, IdfTable, LexicalAnswerer};
use hushqa::corpus::{build_secret_store, designate_secrets};
use hushqa::synth::{synthetic_corpus, SynthConfig};
use hushqa::{Corpus, SecretStore};

pub struct Fixture {
    pub corpus: Corpus,
    pub idf: Arc<IdfTable>,
    pub embedder: HashedTfIdfEmbedder,
    pub answerer: LexicalAnswerer,
    pub store: SecretStore,
}

/// Synthetic corpus with `secrets` designated passages at full context.
pub fn fixture(passages: usize, secrets: usize, dim: usize) -> Fixture {
    let corpus = synthetic_corpus(&SynthConfig { passages, ..Default::default() });
    let idf = Arc::new(build_idf(&corpus).expect("non-empty corpus"));
    let ids = designate_secrets(&corpus, secrets, 0).expect("enough passages");
    let store = build_secret_store(&corpus, &ids, 1.0).expect("valid ratio");
    Fixture {
        embedder: HashedTfIdfEmbedder::new(idf.clone(), dim),
        answerer: LexicalAnswerer::new(idf.clone(), dim),
        idf,
        corpus,
        store,
    }
}
