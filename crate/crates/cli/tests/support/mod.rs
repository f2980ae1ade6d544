#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use hushqa::corpus::designate_secrets;
use hushqa::harness::Backends;
use hushqa::synth::{synthetic_corpus, SynthConfig};
use hushqa::{Corpus, RiskProfile, SecretIds};
use hushqa_cli::gateway::{serve_on, Gateway};

pub struct Reply {
    pub status: u16,
    pub content_type: Option<String>,
    pub header_names: Vec<String>,
    pub body: String,
}

pub struct Server {
    pub base: String,
    pub gateway: Arc<Gateway>,
    agent: ureq::Agent,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    pub fn start(gateway: Gateway) -> Self {
        let gateway = Arc::new(gateway);
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let gw = gateway.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve_on(listener, gw, async {
                    let _ = stopped.await;
                })
                .await
                .unwrap();
            });
        });
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Server {
            base: format!("http://{}", addr_rx.recv().unwrap()),
            gateway,
            agent,
            stop: Some(stop),
            thread: Some(thread),
        }
    }

    fn reply(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Reply {
        let mut resp = resp.unwrap();
        let mut header_names: Vec<String> = resp
            .headers()
            .keys()
            .map(|k| k.as_str().to_string())
            .filter(|k| k != "date")
            .collect();
        header_names.sort();
        Reply {
            status: resp.status().as_u16(),
            content_type: resp
                .headers()
                .get("content-type")
                .map(|v| v.to_str().unwrap().to_string()),
            header_names,
            body: resp.body_mut().read_to_string().unwrap(),
        }
    }

    pub fn post_raw(&self, path: &str, body: &str) -> Reply {
        Self::reply(
            self.agent
                .post(&format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .send(body),
        )
    }

    pub fn ask(&self, question: &str, passage_id: Option<&str>) -> Reply {
        let body = match passage_id {
            Some(p) => serde_json::json!({ "question": question, "passage_id": p }),
            None => serde_json::json!({ "question": question }),
        };
        self.post_raw("/ask", &body.to_string())
    }

    pub fn get(&self, path: &str) -> Reply {
        Self::reply(self.agent.get(&format!("{}{path}", self.base)).call())
    }

    /// Stops the server and waits for the audit log flush.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            t.join().unwrap();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// 16-passage synthetic corpus with 4 designated secrets.
pub fn fixture() -> (Corpus, SecretIds) {
    let corpus = synthetic_corpus(&SynthConfig { passages: 16, ..Default::default() });
    let ids = designate_secrets(&corpus, 4, 5).unwrap();
    (corpus, ids)
}

pub fn builtin_gateway(corpus: &Corpus, ids: &SecretIds) -> Gateway {
    let backends = Backends::builtin(corpus, 256).unwrap();
    Gateway::new(corpus.clone(), ids, 1.0, RiskProfile::default(), backends).unwrap()
}

/// Every piece of secret text: passage sentences and gold answers.
pub fn secret_strings(corpus: &Corpus, ids: &SecretIds) -> Vec<String> {
    let mut out = Vec::new();
    for id in ids {
        let p = corpus.passage(id).unwrap();
        out.extend(p.sentence_texts().map(str::to_string));
    }
    for q in corpus.questions().iter().filter(|q| ids.contains(&q.passage_id)) {
        out.extend(q.gold_answers.iter().map(|g| g.text.clone()));
        // Individual answer tokens too, so partial echoes are caught.
        out.extend(q.gold_answers.iter().flat_map(|g| g.text.split_whitespace().map(str::to_string)));
    }
    out.retain(|s| s.len() >= 3 && !["Mount", "Fort", "the"].contains(&s.as_str()));
    out.sort();
    out.dedup();
    out
}
