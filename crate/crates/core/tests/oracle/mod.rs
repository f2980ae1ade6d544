//! Brute-force reference implementations used only by tests.
#![allow(dead_code)]

use hushqa::backends::{cosine, embed, IdfTable};
use hushqa::corpus::split_sentences;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const WORDS: [&str; 24] = [
    "river", "mountain", "snow", "capital", "city", "king", "harbour", "grain", "fort", "colony", "year",
    "founded", "north", "south", "bridge", "market", "temple", "valley", "queen", "salt", "copper", "delta",
    "island", "tower",
];

/// Alphanumeric runs with byte offsets, scanned independently of the crate.
fn words(text: &str) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut cur: Option<usize> = None;
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in bytes.iter().enumerate() {
        if c.is_alphanumeric() {
            cur.get_or_insert(i);
        }
        let next_is_word = bytes.get(k + 1).is_some_and(|&(_, n)| n.is_alphanumeric());
        if c.is_alphanumeric() && !next_is_word {
            let s = cur.take().unwrap();
            let e = i + c.len_utf8();
            out.push((s, e, text[s..e].to_lowercase()));
        }
    }
    out
}

/// Exhaustive window enumeration. Returns `None` for an abstention,
/// otherwise `(text, start, end)`.
pub fn brute_force_answer(question: &str, context: &str, idf: &IdfTable, dim: usize) -> Option<(String, usize, usize)> {
    let sentences = split_sentences(context);
    let q = embed(question, idf, dim);
    let sims: Vec<f64> = sentences
        .iter()
        .map(|s| cosine(&q, &embed(s.slice(context), idf, dim)).unwrap())
        .collect();
    let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winner = sims.iter().position(|&s| s == best)?;
    if best < 0.05 {
        return None;
    }
    let span = sentences[winner];
    let qwords: Vec<String> = words(question).into_iter().map(|w| w.2).collect();
    let toks = words(span.slice(context));

    let mut windows: Vec<(f64, usize, usize)> = Vec::new();
    for start in 0..toks.len() {
        for len in 1..=8usize {
            if start + len > toks.len() {
                break;
            }
            let mut sum = 0.0;
            for t in &toks[start..start + len] {
                sum += if qwords.contains(&t.2) { 0.0 } else { idf.idf(&t.2) };
            }
            windows.push((sum - 0.1 * len as f64, start, len));
        }
    }
    windows.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let &(_, start, len) = windows.first()?;
    let s = span.start + toks[start].0;
    let e = span.start + toks[start + len - 1].1;
    Some((context[s..e].to_string(), s, e))
}

fn sentence<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(3..=10);
    let mut ws: Vec<String> = (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
    let mut first = ws[0].chars();
    ws[0] = first.next().unwrap().to_uppercase().chain(first).collect();
    format!("{}.", ws.join(" "))
}

/// A random three-sentence context and a question drawing on its vocabulary.
pub fn random_instance<R: Rng>(rng: &mut R) -> (String, String) {
    let context = (0..3).map(|_| sentence(rng)).collect::<Vec<_>>().join(" ");
    let n = rng.random_range(1..=6);
    let q: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    (format!("Which {}?", q.join(" ")), context)
}

/// A handful of random background documents for idf estimation.
pub fn random_idf<R: Rng>(rng: &mut R, context: &str) -> IdfTable {
    let mut docs: Vec<String> = (0..rng.random_range(1..6)).map(|_| sentence(rng)).collect();
    docs.push(context.to_string());
    IdfTable::from_documents(docs.iter().map(String::as_str))
}
