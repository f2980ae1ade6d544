//! Deterministic synthetic corpora in SQuAD shape.
//!
//! Each passage describes one invented place through fact sentences such as
//! "The capital of Quarvel is Tomeni." and carries one question per fact,
//! phrased so every non-answer token of the fact also appears in the
//! question. A fraction of answer values is drawn from a small shared pool,
//! so different passages sometimes give the same answer to the same kind of
//! question.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GoldAnswer, Passage, Question};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub passages: usize,
    /// At most [`RELATIONS`]`.len()`.
    pub facts_per_passage: usize,
    /// Probability that an answer value comes from the shared pool.
    pub shared_value_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            passages: 64,
            facts_per_passage: 5,
            shared_value_rate: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Value {
    Name,
    Person,
    Number,
    Year,
    Prefixed(&'static str),
}

struct Relation {
    /// `{o}` is the answer; `{s}`, the subject, appears only in questions so
    /// that relation words, not the subject name, decide sentence selection.
    sentence: &'static str,
    question: &'static str,
    value: Value,
}

const RELATIONS: [Relation; 10] = [
    Relation { sentence: "The capital is {o}.", question: "What is the capital of {s}?", value: Value::Name },
    Relation { sentence: "The founder was {o}.", question: "Who was the founder of {s}?", value: Value::Person },
    Relation { sentence: "The main river is the {o}.", question: "What is the main river of {s}?", value: Value::Name },
    Relation { sentence: "The largest city is {o}.", question: "What is the largest city of {s}?", value: Value::Name },
    Relation { sentence: "The population is {o}.", question: "What is the population of {s}?", value: Value::Number },
    Relation { sentence: "The founding year was {o}.", question: "What was the founding year of {s}?", value: Value::Year },
    Relation { sentence: "The highest peak is {o}.", question: "What is the highest peak of {s}?", value: Value::Prefixed("Mount") },
    Relation { sentence: "The oldest fortress is {o}.", question: "What is the oldest fortress of {s}?", value: Value::Prefixed("Fort") },
    Relation { sentence: "The official language is {o}.", question: "What is the official language of {s}?", value: Value::Name },
    Relation { sentence: "The current leader is {o}.", question: "Who is the current leader of {s}?", value: Value::Person },
];

pub const MAX_FACTS: usize = RELATIONS.len();

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "th", "qu"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "l", "s", "x"];

struct Namer {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Namer {
    fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(&mut self.rng).unwrap());
                w.push_str(VOWELS.choose(&mut self.rng).unwrap());
            }
            w.push_str(CODAS.choose(&mut self.rng).unwrap());
            let mut cs = w.chars();
            let w: String = cs.next().unwrap().to_uppercase().chain(cs).collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn value(&mut self, kind: Value) -> String {
        match kind {
            Value::Name => self.word(),
            Value::Person => format!("{} {}", self.word(), self.word()),
            Value::Number => self.rng.random_range(1_000..1_000_000u32).to_string(),
            Value::Year => self.rng.random_range(1000..2000u32).to_string(),
            Value::Prefixed(p) => format!("{p} {}", self.word()),
        }
    }
}

/// Builds a corpus; identical configs give identical corpora.
pub fn synthetic_corpus(config: &SynthConfig) -> Corpus {
    let facts = config.facts_per_passage.clamp(1, MAX_FACTS);
    let mut namer = Namer {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        used: HashSet::new(),
    };
    let pools: Vec<Vec<String>> = RELATIONS
        .iter()
        .map(|r| (0..4).map(|_| namer.value(r.value)).collect())
        .collect();

    let mut passages = Vec::with_capacity(config.passages);
    let mut questions = Vec::new();
    for _ in 0..config.passages {
        let subject = namer.word();
        let mut chosen: Vec<usize> = (0..RELATIONS.len()).collect();
        chosen.shuffle(&mut namer.rng);
        chosen.truncate(facts);

        let mut text = String::new();
        let mut pending = Vec::with_capacity(facts);
        for &ri in &chosen {
            let rel = &RELATIONS[ri];
            let shared = namer.rng.random_bool(config.shared_value_rate.clamp(0.0, 1.0));
            let value = if shared {
                pools[ri].choose(&mut namer.rng).unwrap().clone()
            } else {
                namer.value(rel.value)
            };
            if !text.is_empty() {
                text.push(' ');
            }
            let head = rel.sentence;
            let cut = head.find("{o}").expect("template has an answer slot");
            let offset = text.len() + cut;
            text.push_str(&head.replace("{o}", &value));
            pending.push((rel.question.replace("{s}", &subject), value, offset));
        }
        let passage = Passage::new(subject, 0, text);
        for (k, (q, value, offset)) in pending.into_iter().enumerate() {
            questions.push(Question {
                id: format!("{}-q{k}", passage.id),
                text: q,
                passage_id: passage.id.clone(),
                gold_answers: vec![GoldAnswer { text: value, offset: Some(offset) }],
            });
        }
        passages.push(passage);
    }
    Corpus::new(passages, questions).expect("synthetic corpus is well formed")
}
