//! SQuAD ingestion, secret designation and evaluation-set sampling.
//!
//! All offsets stored here are UTF-8 byte offsets into the owning passage
//! text. SQuAD files count `answer_start` in Unicode scalar values; the
//! conversion happens at the file boundary (see [`parse_squad`] and
//! [`to_squad_json`]).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

/// Abbreviations that never terminate a sentence.
pub const ABBREVIATIONS: [&str; 9] = [
    "Mr.", "Mrs.", "Dr.", "St.", "No.", "vs.", "etc.", "e.g.", "i.e.",
];

/// Set of designated secret passage ids. Sorted, so iteration order is stable.
pub type SecretIds = BTreeSet<String>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("question {question:?} references unknown passage {passage:?}")]
    DanglingQuestion { question: String, passage: String },
    #[error("unknown passage id {0:?}")]
    UnknownPassage(String),
    #[error("cannot designate {requested} secrets from {available} passages")]
    TooManySecrets { requested: usize, available: usize },
    #[error("context ratio {0} outside (0, 1]")]
    ContextRatio(f64),
    #[error("secret question ratio {0} outside [0, 1]")]
    SecretRatio(f64),
    #[error("{stratum} stratum has {available} questions, {needed} needed")]
    StratumShortage {
        stratum: Stratum,
        needed: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratum {
    Secret,
    NonSecret,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::Secret => f.write_str("secret"),
            Stratum::NonSecret => f.write_str("non-secret"),
        }
    }
}

/// Half-open byte range `[start, end)` of one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
}

impl SentenceSpan {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub text: String,
    pub sentences: Vec<SentenceSpan>,
}

impl Passage {
    /// Builds a passage and segments its text.
    pub fn new(title: impl Into<String>, index: usize, text: impl Into<String>) -> Self {
        let title = title.into();
        let text = text.into();
        Passage {
            id: passage_id(&title, index),
            sentences: split_sentences(&text),
            title,
            text,
        }
    }

    pub fn sentence_texts(&self) -> impl Iterator<Item = &str> + '_ {
        self.sentences.iter().map(|s| s.slice(&self.text))
    }
}

pub fn passage_id(title: &str, index: usize) -> String {
    format!("{title}#{index}")
}

/// A reference answer. `offset` is `None` once redaction has invalidated it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub text: String,
    pub offset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub passage_id: String,
    pub gold_answers: Vec<GoldAnswer>,
}

/// Passages plus the questions asked about them, with referential integrity
/// checked at construction.
#[derive(Debug, Clone)]
pub struct Corpus {
    passages: Vec<Passage>,
    questions: Vec<Question>,
    index: HashMap<String, usize>,
    redacted: bool,
}

impl Corpus {
    pub fn new(passages: Vec<Passage>, questions: Vec<Question>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            validate_spans(p)?;
            if index.insert(p.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "passage",
                    id: p.id.clone(),
                });
            }
        }
        let mut seen = HashSet::with_capacity(questions.len());
        for q in &questions {
            if !seen.insert(q.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    kind: "question",
                    id: q.id.clone(),
                });
            }
            let Some(&pi) = index.get(&q.passage_id) else {
                return Err(CorpusError::DanglingQuestion {
                    question: q.id.clone(),
                    passage: q.passage_id.clone(),
                });
            };
            if q.gold_answers.is_empty() {
                return Err(CorpusError::Schema {
                    path: format!("question {}", q.id),
                    message: "empty answers list".into(),
                });
            }
            let text = &passages[pi].text;
            for g in &q.gold_answers {
                if let Some(off) = g.offset {
                    let ok = text.is_char_boundary(off) && text[off..].starts_with(&g.text);
                    if !ok {
                        return Err(CorpusError::Schema {
                            path: format!("question {}", q.id),
                            message: format!("gold answer {:?} not found at offset {off}", g.text),
                        });
                    }
                }
            }
        }
        Ok(Corpus {
            passages,
            questions,
            index,
            redacted: false,
        })
    }

    pub(crate) fn mark_redacted(mut self) -> Self {
        self.redacted = true;
        self
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.index.get(id).map(|&i| &self.passages[i])
    }

    pub fn passage_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn is_redacted(&self) -> bool {
        self.redacted
    }

    pub fn sentence_count(&self) -> usize {
        self.passages.iter().map(|p| p.sentences.len()).sum()
    }
}

fn validate_spans(p: &Passage) -> Result<(), CorpusError> {
    let mut prev_end = 0;
    for s in &p.sentences {
        let ok = s.start >= prev_end
            && s.start <= s.end
            && s.end <= p.text.len()
            && p.text.is_char_boundary(s.start)
            && p.text.is_char_boundary(s.end);
        if !ok {
            return Err(CorpusError::Schema {
                path: format!("passage {}", p.id),
                message: format!("invalid sentence span {}..{}", s.start, s.end),
            });
        }
        prev_end = s.end;
    }
    Ok(())
}

/// Segments text into sentences.
///
/// A sentence ends at `.`, `!` or `?` when the mark is followed by the end of
/// the text, or by whitespace and then an uppercase letter (or the end of the
/// text). A mark ending one of [`ABBREVIATIONS`] never ends a sentence.
/// Spans exclude surrounding whitespace.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut word_start = 0;
    let chars = text.char_indices();

    for (i, c) in chars {
        if c.is_whitespace() {
            word_start = i + c.len_utf8();
            continue;
        }
        if start.is_none() {
            start = Some(i);
            word_start = i;
        }
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = i + c.len_utf8();
        let rest = &text[end..];
        let boundary = match rest.chars().next() {
            None => true,
            Some(n) if n.is_whitespace() => match rest.trim_start().chars().next() {
                None => true,
                Some(m) => m.is_uppercase(),
            },
            Some(_) => false,
        };
        if boundary && !ABBREVIATIONS.contains(&&text[word_start..end]) {
            spans.push(SentenceSpan {
                start: start.take().unwrap_or(i),
                end,
            });
        }
    }
    if let Some(s) = start {
        let end = text.trim_end().len();
        if end > s {
            spans.push(SentenceSpan { start: s, end });
        }
    }
    spans
}

/// Reads a SQuAD v1.1 file.
pub fn load_squad(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_squad(&raw)
}

/// Parses SQuAD v1.1 JSON. A top-level `"redacted": true` marker makes
/// `answer_start` optional.
pub fn parse_squad(raw: &str) -> Result<Corpus, CorpusError> {
    let root: Value = serde_json::from_str(raw)?;
    let redacted = root.get("redacted").and_then(Value::as_bool).unwrap_or(false);
    let data = field(&root, "data", "$")?
        .as_array()
        .ok_or_else(|| schema("$.data", "expected array"))?;

    let mut passages = Vec::new();
    let mut questions = Vec::new();
    for (ai, article) in data.iter().enumerate() {
        let apath = format!("$.data[{ai}]");
        let title = str_field(article, "title", &apath)?;
        let paragraphs = field(article, "paragraphs", &apath)?
            .as_array()
            .ok_or_else(|| schema(format!("{apath}.paragraphs"), "expected array"))?;
        for (pi, para) in paragraphs.iter().enumerate() {
            let ppath = format!("{apath}.paragraphs[{pi}]");
            let context = str_field(para, "context", &ppath)?;
            let passage = Passage::new(title, pi, context);
            let qas = field(para, "qas", &ppath)?
                .as_array()
                .ok_or_else(|| schema(format!("{ppath}.qas"), "expected array"))?;
            for (qi, qa) in qas.iter().enumerate() {
                let qpath = format!("{ppath}.qas[{qi}]");
                questions.push(parse_qa(qa, &qpath, &passage, redacted)?);
            }
            passages.push(passage);
        }
    }
    let corpus = Corpus::new(passages, questions)?;
    Ok(if redacted { corpus.mark_redacted() } else { corpus })
}

fn parse_qa(qa: &Value, qpath: &str, passage: &Passage, redacted: bool) -> Result<Question, CorpusError> {
    let id = str_field(qa, "id", qpath)?;
    let text = str_field(qa, "question", qpath)?;
    let answers = field(qa, "answers", qpath)?
        .as_array()
        .ok_or_else(|| schema(format!("{qpath}.answers"), "expected array"))?;
    if answers.is_empty() {
        return Err(schema(format!("{qpath}.answers"), format!("qa {id:?}: empty answers list")));
    }
    let mut gold: Vec<GoldAnswer> = Vec::with_capacity(answers.len());
    for (ni, ans) in answers.iter().enumerate() {
        let npath = format!("{qpath}.answers[{ni}]");
        let atext = str_field(ans, "text", &npath)?;
        let offset = match ans.get("answer_start") {
            None | Some(Value::Null) if redacted => None,
            None => return Err(schema(format!("{npath}.answer_start"), "missing field")),
            Some(v) => {
                let chars = v
                    .as_u64()
                    .ok_or_else(|| schema(format!("{npath}.answer_start"), "expected unsigned integer"))?;
                let byte = char_to_byte(&passage.text, chars as usize).filter(|&b| passage.text[b..].starts_with(atext));
                match byte {
                    Some(b) => Some(b),
                    None => {
                        return Err(schema(
                            npath,
                            format!("qa {id:?}: answer {atext:?} does not match context at {chars}"),
                        ))
                    }
                }
            }
        };
        let g = GoldAnswer {
            text: atext.to_string(),
            offset,
        };
        if !gold.contains(&g) {
            gold.push(g);
        }
    }
    Ok(Question {
        id: id.to_string(),
        text: text.to_string(),
        passage_id: passage.id.clone(),
        gold_answers: gold,
    })
}

fn field<'a>(v: &'a Value, name: &str, path: &str) -> Result<&'a Value, CorpusError> {
    v.get(name).ok_or_else(|| schema(format!("{path}.{name}"), "missing field"))
}

fn str_field<'a>(v: &'a Value, name: &str, path: &str) -> Result<&'a str, CorpusError> {
    field(v, name, path)?
        .as_str()
        .ok_or_else(|| schema(format!("{path}.{name}"), "expected string"))
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn char_to_byte(text: &str, chars: usize) -> Option<usize> {
    text.char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .nth(chars)
}

fn byte_to_char(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Serializes a corpus back to SQuAD-shaped JSON. Redacted corpora carry a
/// `"redacted": true` marker and omit every `answer_start`.
pub fn to_squad_json(corpus: &Corpus) -> Value {
    let by_id: HashMap<&str, Vec<&Question>> =
        corpus.questions.iter().fold(HashMap::new(), |mut m, q| {
            m.entry(q.passage_id.as_str()).or_default().push(q);
            m
        });
    let mut data: Vec<Value> = Vec::new();
    let mut current: Option<(String, Vec<Value>)> = None;
    for p in &corpus.passages {
        let qas: Vec<Value> = by_id
            .get(p.id.as_str())
            .map(|qs| qs.iter().map(|q| qa_json(q, &p.text, corpus.redacted)).collect())
            .unwrap_or_default();
        let para = json!({ "context": p.text, "qas": qas });
        match &mut current {
            Some((t, paras)) if *t == p.title => paras.push(para),
            _ => {
                if let Some((t, paras)) = current.take() {
                    data.push(json!({ "title": t, "paragraphs": paras }));
                }
                current = Some((p.title.clone(), vec![para]));
            }
        }
    }
    if let Some((t, paras)) = current {
        data.push(json!({ "title": t, "paragraphs": paras }));
    }
    let mut root = Map::new();
    root.insert("version".into(), json!("1.1"));
    if corpus.redacted {
        root.insert("redacted".into(), json!(true));
    }
    root.insert("data".into(), Value::Array(data));
    Value::Object(root)
}

fn qa_json(q: &Question, context: &str, redacted: bool) -> Value {
    let answers: Vec<Value> = q
        .gold_answers
        .iter()
        .map(|g| match g.offset {
            Some(off) if !redacted => json!({ "text": g.text, "answer_start": byte_to_char(context, off) }),
            _ => json!({ "text": g.text }),
        })
        .collect();
    json!({ "id": q.id, "question": q.text, "answers": answers })
}

/// Reads a JSON array of passage ids and checks each one resolves.
pub fn load_secret_ids(path: impl AsRef<Path>, corpus: &Corpus) -> Result<SecretIds, CorpusError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let ids: Vec<String> = serde_json::from_str(&raw)?;
    let ids: SecretIds = ids.into_iter().collect();
    if let Some(bad) = ids.iter().find(|id| corpus.passage(id).is_none()) {
        return Err(CorpusError::UnknownPassage(bad.clone()));
    }
    Ok(ids)
}

/// Picks `n` secret passages.
///
/// Passage ids are sorted, shuffled with a Fisher-Yates permutation driven by
/// `ChaCha8Rng::seed_from_u64(seed)`, and the first `n` are kept. For a fixed
/// seed the selections are nested: the set for `n` contains the set for any
/// smaller `n`.
pub fn designate_secrets(corpus: &Corpus, n: usize, seed: u64) -> Result<SecretIds, CorpusError> {
    let available = corpus.passages.len();
    if n > available {
        return Err(CorpusError::TooManySecrets {
            requested: n,
            available,
        });
    }
    let mut ids: Vec<&str> = corpus.passages.iter().map(|p| p.id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    Ok(ids.into_iter().take(n).map(str::to_string).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecretEntry {
    pub passage_id: String,
    pub text: String,
    pub sentences: Vec<SentenceSpan>,
}

/// The secrets-only context available to the keeper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecretStore {
    pub entries: Vec<SecretEntry>,
    pub context_ratio: f64,
}

impl SecretStore {
    pub fn empty() -> Self {
        SecretStore {
            entries: Vec::new(),
            context_ratio: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sentence_count(&self) -> usize {
        self.entries.iter().map(|e| e.sentences.len()).sum()
    }
}

/// Number of sentences kept out of `total` at `ratio`, i.e. `ceil(ratio * total)`.
/// A 1e-9 slack absorbs products such as `0.7 * 10 = 7.000000000000001`.
pub fn kept_sentences(ratio: f64, total: usize) -> usize {
    let k = (ratio * total as f64 - 1e-9).ceil();
    (k.max(0.0) as usize).min(total)
}

/// Builds the secret store, keeping a whole-sentence prefix of each secret
/// passage. Entries follow the sorted order of `secret_ids`.
pub fn build_secret_store(
    corpus: &Corpus,
    secret_ids: &SecretIds,
    context_ratio: f64,
) -> Result<SecretStore, CorpusError> {
    if !(context_ratio > 0.0 && context_ratio <= 1.0) {
        return Err(CorpusError::ContextRatio(context_ratio));
    }
    let mut entries = Vec::with_capacity(secret_ids.len());
    for id in secret_ids {
        let p = corpus
            .passage(id)
            .ok_or_else(|| CorpusError::UnknownPassage(id.clone()))?;
        let k = kept_sentences(context_ratio, p.sentences.len());
        let sentences = p.sentences[..k].to_vec();
        let end = sentences.last().map_or(0, |s| s.end);
        entries.push(SecretEntry {
            passage_id: id.clone(),
            text: p.text[..end].to_string(),
            sentences,
        });
    }
    Ok(SecretStore {
        entries,
        context_ratio,
    })
}

/// An ordered evaluation set; items index into [`Corpus::questions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub items: Vec<usize>,
    pub secret_ratio: f64,
    pub seed: u64,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn questions<'a>(&'a self, corpus: &'a Corpus) -> impl Iterator<Item = &'a Question> + 'a {
        self.items.iter().map(|&i| &corpus.questions[i])
    }
}

/// Number of secret-targeting items for a set of `n_total`.
pub fn secret_item_count(secret_ratio: f64, n_total: usize) -> usize {
    (secret_ratio * n_total as f64).round() as usize
}

/// Question indices split into (secret, non-secret) strata, each in corpus order.
pub fn strata(corpus: &Corpus, secret_ids: &SecretIds) -> (Vec<usize>, Vec<usize>) {
    (0..corpus.questions.len()).partition(|&i| secret_ids.contains(&corpus.questions[i].passage_id))
}

/// Samples an evaluation set with exactly `round(secret_ratio * n_total)`
/// secret-targeting questions.
///
/// One `ChaCha8Rng` stream seeded with `seed` shuffles the secret stratum,
/// then the non-secret stratum, then the concatenated selection. Because the
/// stratum shuffles do not depend on the ratio, raising the ratio only adds
/// secret questions and drops non-secret ones.
pub fn sample_eval_set(
    corpus: &Corpus,
    secret_ids: &SecretIds,
    n_total: usize,
    secret_ratio: f64,
    seed: u64,
) -> Result<EvalSet, CorpusError> {
    if !(0.0..=1.0).contains(&secret_ratio) {
        return Err(CorpusError::SecretRatio(secret_ratio));
    }
    let (mut secret, mut open) = strata(corpus, secret_ids);
    let n_secret = secret_item_count(secret_ratio, n_total);
    let n_open = n_total - n_secret;
    if n_secret > secret.len() {
        return Err(CorpusError::StratumShortage {
            stratum: Stratum::Secret,
            needed: n_secret,
            available: secret.len(),
        });
    }
    if n_open > open.len() {
        return Err(CorpusError::StratumShortage {
            stratum: Stratum::NonSecret,
            needed: n_open,
            available: open.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    secret.shuffle(&mut rng);
    open.shuffle(&mut rng);
    let mut items: Vec<usize> = secret[..n_secret].iter().chain(&open[..n_open]).copied().collect();
    items.shuffle(&mut rng);
    Ok(EvalSet {
        items,
        secret_ratio,
        seed,
    })
}
