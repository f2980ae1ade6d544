use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use super::{BackendError, Embedder, EmbeddingVector};
use crate::corpus::Corpus;

pub const DEFAULT_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// A lowercased token and the byte range it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

/// Maximal alphanumeric runs, lowercased, with their source offsets.
pub fn token_spans(text: &str) -> Vec<TokenSpan> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(TokenSpan {
                    token: text[s..i].to_lowercase(),
                    start: s,
                    end: i,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(TokenSpan {
            token: text[s..].to_lowercase(),
            start: s,
            end: text.len(),
        });
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|t| t.token).collect()
}

/// Smoothed inverse document frequencies.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`; unseen tokens get `ln(1 + N) + 1`.
/// A table over zero documents weights every token 1.0.
#[derive(Debug, Clone, Default)]
pub struct IdfTable {
    weights: HashMap<String, f64>,
    documents: usize,
}

impl IdfTable {
    pub fn from_documents<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut documents = 0;
        for doc in docs {
            documents += 1;
            let unique: HashSet<String> = tokenize(doc).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = documents as f64;
        let weights = df
            .into_iter()
            .map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
            .collect();
        IdfTable { weights, documents }
    }

    pub fn idf(&self, token: &str) -> f64 {
        self.weights
            .get(token)
            .copied()
            .unwrap_or_else(|| (1.0 + self.documents as f64).ln() + 1.0)
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Document frequencies over passages.
pub fn build_idf(corpus: &Corpus) -> Result<IdfTable, BackendError> {
    if corpus.passages().is_empty() {
        return Err(BackendError::EmptyCorpus);
    }
    Ok(IdfTable::from_documents(corpus.passages().iter().map(|p| p.text.as_str())))
}

/// Signed feature hashing of TF-IDF weights.
///
/// Each token lands at `fnv1a64(token) % dim` with sign `+1` when bit 63 of
/// the hash is clear, `-1` otherwise, contributing `sign * tf * idf`.
pub fn embed(text: &str, idf: &IdfTable, dim: usize) -> EmbeddingVector {
    assert!(dim >= 2, "embedding dimension must be at least 2");
    let mut tf: BTreeMap<String, u32> = BTreeMap::new();
    for t in tokenize(text) {
        *tf.entry(t).or_default() += 1;
    }
    let mut v = vec![0.0; dim];
    for (token, count) in tf {
        let h = fnv1a64(token.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign * f64::from(count) * idf.idf(&token);
    }
    EmbeddingVector(v)
}

/// `dot(u, v) / (|u| |v|)`, or 0 when either norm is 0.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, BackendError> {
    if u.dim() != v.dim() {
        return Err(BackendError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(cosine_slices(u.as_slice(), v.as_slice()))
}

/// Cosine over raw slices of equal length.
pub fn cosine_slices(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return 0.0;
    }
    (dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0)
}

/// The built-in sentence encoder.
#[derive(Debug, Clone)]
pub struct HashedTfIdfEmbedder {
    idf: Arc<IdfTable>,
    dim: usize,
    id: String,
}

impl HashedTfIdfEmbedder {
    pub fn new(idf: Arc<IdfTable>, dim: usize) -> Self {
        assert!(dim >= 2, "embedding dimension must be at least 2");
        HashedTfIdfEmbedder {
            idf,
            dim,
            id: format!("builtin-tfidf-{dim}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        embed(text, &self.idf, self.dim)
    }
}

impl Embedder for HashedTfIdfEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tokenizer_folds_case_and_punctuation() {
        assert_eq!(tokenize("Mount Kenya!"), ["mount", "kenya"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Fort Caroline"), tokenize("fort   CAROLINE."));
        assert_eq!(tokenize("in 1564, 3rd"), ["in", "1564", "3rd"]);
        let spans = token_spans("Ça, va");
        assert_eq!((spans[0].start, spans[0].end, spans[1].start), (0, 3, 5));
    }

    #[test]
    fn idf_formula() {
        let one = IdfTable::from_documents(["paris rocks"]);
        assert_eq!(one.idf("paris"), 1.0);
        let three = IdfTable::from_documents(["a x", "b x", "x c"]);
        assert_eq!(three.idf("x"), 1.0);
        assert_eq!(three.idf("a"), (4.0f64 / 2.0).ln() + 1.0);
        assert_eq!(three.idf("unseen"), 4.0f64.ln() + 1.0);
        assert_eq!(IdfTable::default().idf("anything"), 1.0);
    }

    #[test]
    fn build_idf_rejects_empty_corpus() {
        let c = Corpus::new(vec![], vec![]).unwrap();
        assert!(matches!(build_idf(&c), Err(BackendError::EmptyCorpus)));
    }

    #[test]
    fn embedding_basics() {
        let idf = IdfTable::default();
        assert!(embed("", &idf, 16).as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(embed("the cat", &idf, 16), embed("the cat", &idf, 16));
        // Manual placement for a single token.
        let h = fnv1a64(b"kenya");
        let v = embed("Kenya kenya", &idf, 64);
        let expect = if h >> 63 == 0 { 2.0 } else { -2.0 };
        assert_eq!(v.as_slice()[(h % 64) as usize], expect);
    }

    #[test]
    fn disjoint_tokens_without_collisions_are_orthogonal() {
        let d = 65536u64;
        let a = ["snow", "mountain", "equator"];
        let b = ["river", "delta", "harbour"];
        let ia: HashSet<u64> = a.iter().map(|t| fnv1a64(t.as_bytes()) % d).collect();
        let ib: HashSet<u64> = b.iter().map(|t| fnv1a64(t.as_bytes()) % d).collect();
        assert!(ia.is_disjoint(&ib));
        let idf = IdfTable::default();
        let c = cosine(&embed(&a.join(" "), &idf, d as usize), &embed(&b.join(" "), &idf, d as usize)).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&ev(&[1.0, 0.0]), &ev(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])).unwrap(), 0.0);
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let got = cosine(&ev(&[1.0, 2.0, 3.0]), &ev(&[4.0, 5.0, 6.0])).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.974632).abs() < 1e-6);
        assert_eq!(cosine(&ev(&[0.0, 0.0]), &ev(&[1.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine(&ev(&[1.0]), &ev(&[1.0, 2.0])),
            Err(BackendError::DimensionMismatch { left: 1, right: 2 })
        ));
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            u in prop::collection::vec(-1e3f64..1e3, 8),
            v in prop::collection::vec(-1e3f64..1e3, 8),
            alpha in 1e-3f64..1e3,
        ) {
            let (eu, evv) = (ev(&u), ev(&v));
            prop_assert_eq!(cosine(&eu, &evv).unwrap(), cosine(&evv, &eu).unwrap());
            let scaled: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            let c1 = cosine(&ev(&scaled), &evv).unwrap();
            let c0 = cosine(&eu, &evv).unwrap();
            prop_assert!((c1 - c0).abs() <= 1e-12);
            if u.iter().any(|&x| x != 0.0) {
                prop_assert!((cosine(&eu, &eu).unwrap() - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn embed_is_pure(text in "[a-zA-Z ,.]{0,60}") {
            let idf = IdfTable::from_documents(["alpha beta", "beta gamma"]);
            prop_assert_eq!(embed(&text, &idf, 32), embed(&text, &idf, 32));
        }
    }
}
