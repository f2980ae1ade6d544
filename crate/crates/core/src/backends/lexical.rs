use std::collections::HashSet;
use std::sync::Arc;

use super::embed::{cosine_slices, embed, token_spans, IdfTable};
use super::{AnswerOutcome, AnswerSpan, Answerer, BackendError};
use crate::corpus::{split_sentences, SentenceSpan};

/// Best sentence similarity below which the answerer abstains.
pub const NO_ANSWER_SIMILARITY: f64 = 0.05;
/// Longest span, in tokens.
pub const MAX_WINDOW: usize = 8;
/// Per-token cost subtracted from a window's score.
pub const LENGTH_PENALTY: f64 = 0.1;

/// Extractive answer over pre-segmented text.
///
/// Picks the sentence most similar to the question (earliest on ties), then
/// the token window of 1 to [`MAX_WINDOW`] tokens maximizing the summed idf
/// of tokens absent from the question minus [`LENGTH_PENALTY`] per token.
/// Ties go to the earliest start, then the shorter window.
pub fn lexical_answer(
    question: &str,
    text: &str,
    sentences: &[SentenceSpan],
    idf: &IdfTable,
    dim: usize,
) -> AnswerOutcome {
    let q = embed(question, idf, dim);
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in sentences.iter().enumerate() {
        let sim = cosine_slices(q.as_slice(), embed(s.slice(text), idf, dim).as_slice());
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
    }
    let Some((winner, similarity)) = best else {
        return AnswerOutcome::NoAnswer { score: 0.0 };
    };
    if similarity < NO_ANSWER_SIMILARITY {
        return AnswerOutcome::NoAnswer { score: similarity };
    }

    let sentence = sentences[winner];
    let question_tokens: HashSet<String> = token_spans(question).into_iter().map(|t| t.token).collect();
    let tokens = token_spans(sentence.slice(text));
    let weights: Vec<f64> = tokens
        .iter()
        .map(|t| if question_tokens.contains(&t.token) { 0.0 } else { idf.idf(&t.token) })
        .collect();

    let mut pick: Option<(usize, usize, f64)> = None;
    for start in 0..tokens.len() {
        let mut sum = 0.0;
        for len in 1..=MAX_WINDOW.min(tokens.len() - start) {
            sum += weights[start + len - 1];
            let score = sum - LENGTH_PENALTY * len as f64;
            if pick.is_none_or(|(_, _, s)| score > s) {
                pick = Some((start, len, score));
            }
        }
    }
    // A sentence with positive similarity always has at least one token.
    let Some((start, len, _)) = pick else {
        return AnswerOutcome::NoAnswer { score: similarity };
    };
    let begin = sentence.start + tokens[start].start;
    let end = sentence.start + tokens[start + len - 1].end;
    AnswerOutcome::Answer(AnswerSpan {
        text: text[begin..end].to_string(),
        start: begin,
        end,
        confidence: similarity,
    })
}

/// Deterministic stand-in for a neural extractive reader.
#[derive(Debug, Clone)]
pub struct LexicalAnswerer {
    idf: Arc<IdfTable>,
    dim: usize,
    id: String,
}

impl LexicalAnswerer {
    pub fn new(idf: Arc<IdfTable>, dim: usize) -> Self {
        assert!(dim >= 2, "embedding dimension must be at least 2");
        LexicalAnswerer {
            idf,
            dim,
            id: "builtin-lexical".into(),
        }
    }

    pub fn answer_segmented(&self, question: &str, text: &str, sentences: &[SentenceSpan]) -> AnswerOutcome {
        lexical_answer(question, text, sentences, &self.idf, self.dim)
    }
}

impl Answerer for LexicalAnswerer {
    fn id(&self) -> &str {
        &self.id
    }

    fn answer(&self, question: &str, context: &str) -> Result<AnswerOutcome, BackendError> {
        Ok(self.answer_segmented(question, context, &split_sentences(context)))
    }
}
