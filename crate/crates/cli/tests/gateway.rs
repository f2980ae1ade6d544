mod support;

use std::sync::Arc;
use std::time::Duration;

use hushqa::backends::RemoteAnswerer;
use hushqa::harness::Backends;
use hushqa::{AnswerOutcome, Answerer, BackendError, RiskProfile};
use hushqa_cli::gateway::{Gateway, NO_ANSWER_BODY};
use support::{builtin_gateway, fixture, secret_strings, Server};

fn metrics(s: &Server) -> serde_json::Value {
    serde_json::from_str(&s.get("/metrics").body).unwrap()
}

#[test]
fn healthz_reports_counts() {
    let (c, ids) = fixture();
    let s = Server::start(builtin_gateway(&c, &ids));
    let r = s.get("/healthz");
    assert_eq!(r.status, 200);
    let v: serde_json::Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(v, serde_json::json!({"status": "ok", "passages": 16, "secrets": 4}));
}

#[test]
fn open_question_is_answered() {
    let (c, ids) = fixture();
    let s = Server::start(builtin_gateway(&c, &ids));
    let q = c.questions().iter().find(|q| !ids.contains(&q.passage_id)).unwrap();
    let r = s.ask(&q.text, Some(&q.passage_id));
    assert_eq!(r.status, 200);
    let v: serde_json::Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(v["answer"], q.gold_answers[0].text.as_str());
    assert!(v["score"].as_f64().unwrap() > 0.0);
    assert_eq!(metrics(&s)["released"], 1);
}

#[test]
fn retrieval_picks_the_most_similar_passage() {
    let (c, ids) = fixture();
    let gw = builtin_gateway(&c, &ids);
    for p in c.passages() {
        assert_eq!(gw.retrieve(&p.text).unwrap(), Some(p.id.as_str()));
    }
    let s = Server::start(gw);
    let open = c.passages().iter().find(|p| !ids.contains(&p.id)).unwrap();
    assert_eq!(s.ask(&open.text, None).status, 200);
}

#[test]
fn withheld_answer_bumps_only_the_withheld_counter() {
    let (c, ids) = fixture();
    let s = Server::start(builtin_gateway(&c, &ids));
    let q = c.questions().iter().find(|q| ids.contains(&q.passage_id)).unwrap();
    let before = metrics(&s);
    let r = s.ask(&q.text, Some(&q.passage_id));
    assert_eq!((r.status, r.body.as_str()), (200, NO_ANSWER_BODY));
    let after = metrics(&s);
    assert_eq!(after["withheld"].as_u64().unwrap(), before["withheld"].as_u64().unwrap() + 1);
    assert_eq!(after["released"], before["released"]);
}

#[test]
fn concurrent_identical_requests_get_identical_responses() {
    let (c, ids) = fixture();
    let s = Arc::new(Server::start(builtin_gateway(&c, &ids)));
    let q = c.questions()[3].clone();
    let replies: Vec<(u16, String)> = (0..16)
        .map(|_| {
            let s = s.clone();
            let q = q.clone();
            std::thread::spawn(move || {
                let r = s.ask(&q.text, Some(&q.passage_id));
                (r.status, r.body)
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|h| h.join().unwrap())
        .collect();
    assert!(replies.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn request_errors_have_generic_bodies() {
    let (c, ids) = fixture();
    let s = Server::start(builtin_gateway(&c, &ids));
    let secret_id = ids.iter().next().unwrap();
    let cases = [
        ("not json", 400),
        ("{}", 400),
        (r#"{"question": 7}"#, 400),
        (r#"{"question": "   "}"#, 400),
        (&*format!(r#"{{"question": "x", "passage_id": "{secret_id}", "extra": 1}}"#), 400),
        (r#"{"question": "What is the capital?", "passage_id": "Nowhere#0"}"#, 404),
    ];
    for (body, status) in cases {
        let r = s.post_raw("/ask", body);
        assert_eq!(r.status, status, "{body}");
        assert!(!r.body.contains("Nowhere") && !r.body.contains(secret_id.as_str()), "{}", r.body);
    }
}

/// Fails with a message that quotes the secret it was looking at.
struct LeakyAnswerer(String);

impl Answerer for LeakyAnswerer {
    fn id(&self) -> &str {
        "leaky"
    }
    fn answer(&self, _q: &str, context: &str) -> Result<AnswerOutcome, BackendError> {
        Err(BackendError::Schema(format!("{} {context}", self.0)))
    }
}

#[test]
fn backend_failures_map_to_503_and_500_without_secret_text() {
    let (c, ids) = fixture();
    let secrets = secret_strings(&c, &ids);
    let builtin = Backends::builtin(&c, 256).unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let down = Backends {
        answerer: Arc::new(RemoteAnswerer::new(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2))),
        embedder: builtin.embedder.clone(),
    };
    let leaky = Backends {
        answerer: Arc::new(LeakyAnswerer(secrets.join(" "))),
        embedder: builtin.embedder.clone(),
    };
    let q = c.questions().iter().find(|q| ids.contains(&q.passage_id)).unwrap();
    for (backends, status) in [(down, 503), (leaky, 500)] {
        let gw = Gateway::new(c.clone(), &ids, 1.0, RiskProfile::default(), backends).unwrap();
        let s = Server::start(gw);
        let r = s.ask(&q.text, Some(&q.passage_id));
        assert_eq!(r.status, status);
        for secret in &secrets {
            assert!(!r.body.contains(secret.as_str()), "{secret:?} in {}", r.body);
        }
        assert_eq!(metrics(&s)["errors"], 1);
    }
}

#[test]
fn audit_log_records_ids_not_secret_text() {
    let (c, ids) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("audit.jsonl");
    let s = Server::start(builtin_gateway(&c, &ids).with_audit_log(&log).unwrap());
    for q in c.questions().iter().take(20) {
        s.ask(&q.text, Some(&q.passage_id));
    }
    s.shutdown();
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 20);
    assert!(lines.iter().any(|l| l["decision"] == "withheld" && ids.contains(l["matched_secret"].as_str().unwrap())));
    for secret in secret_strings(&c, &ids) {
        assert!(!text.contains(&secret), "{secret:?} in audit log");
    }
}
