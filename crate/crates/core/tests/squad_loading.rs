use std::collections::BTreeSet;

use hushqa::corpus::{load_squad, parse_squad};
use serde_json::{json, Value};

/// Paragraph and distinct-question counts read straight off the JSON.
fn counts(v: &Value) -> (usize, usize) {
    let mut paragraphs = 0;
    let mut ids = BTreeSet::new();
    for article in v["data"].as_array().unwrap() {
        for p in article["paragraphs"].as_array().unwrap() {
            paragraphs += 1;
            for qa in p["qas"].as_array().unwrap() {
                ids.insert(qa["id"].as_str().unwrap().to_string());
            }
        }
    }
    (paragraphs, ids.len())
}

fn fixture() -> Value {
    let articles: Vec<Value> = (0..3)
        .map(|a| {
            let paragraphs: Vec<Value> = (0..4)
                .map(|p| {
                    let context = format!("Élan {a}-{p} rose in 15{p}0. The river Ouse drains it. Dr. Ng named it.");
                    let start = context.chars().count() - "Ng named it.".chars().count();
                    json!({
                        "context": context,
                        "qas": [
                            {"id": format!("{a}-{p}-a"), "question": "Who named it?",
                             "answers": [{"text": "Ng", "answer_start": start}, {"text": "Ng", "answer_start": start}]},
                            {"id": format!("{a}-{p}-b"), "question": "What drains it?",
                             "answers": [{"text": "Ouse", "answer_start": context.chars().position(|c| c == 'O').unwrap()}]}
                        ]
                    })
                })
                .collect();
            json!({"title": format!("Article {a}"), "paragraphs": paragraphs})
        })
        .collect();
    json!({"version": "1.1", "data": articles})
}

#[test]
fn generated_fixture_counts_and_offsets() {
    let v = fixture();
    let c = parse_squad(&v.to_string()).unwrap();
    assert_eq!((c.passages().len(), c.questions().len()), counts(&v));
    assert_eq!(c.passages()[5].id, "Article 1#1");
    for q in c.questions() {
        // Duplicate gold answers collapse to one.
        assert_eq!(q.gold_answers.len(), 1);
        let p = c.passage(&q.passage_id).unwrap();
        let g = &q.gold_answers[0];
        let off = g.offset.unwrap();
        assert_eq!(&p.text[off..off + g.text.len()], g.text);
    }
    assert_eq!(c.passages()[0].sentences.len(), 3);
}

#[test]
fn loads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dev.json");
    std::fs::write(&path, fixture().to_string()).unwrap();
    assert_eq!(load_squad(&path).unwrap().questions().len(), 24);
    assert!(load_squad(dir.path().join("missing.json")).is_err());
}

/// Set HUSHQA_SQUAD_DEV to a SQuAD v1.1 dev file to check it end to end.
#[test]
fn official_dev_file_when_available() {
    let Ok(path) = std::env::var("HUSHQA_SQUAD_DEV") else {
        eprintln!("HUSHQA_SQUAD_DEV not set; skipping");
        return;
    };
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let c = load_squad(&path).unwrap();
    assert_eq!((c.passages().len(), c.questions().len()), counts(&v));
}
