#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rws_core::corpus::{ingest_corpus, CorpusFormat, DocStore};
use rws_core::index::InvertedIndex;
use serde_json::Value;

/// A request as seen by the mock server.
#[derive(Debug, Clone)]
pub struct Seen {
    pub body: Value,
    pub auth: Option<String>,
}

/// HTTP scoring service on localhost. The handler maps a request body to
/// `(status, response body)`.
pub struct MockServer {
    pub url: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&Value) -> (u16, String) + Send + Sync + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}/score", server.server_addr().to_ip().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let handler = Arc::new(handler);
        let thread = {
            let server = Arc::clone(&server);
            let seen = Arc::clone(&seen);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut text = String::new();
                    req.as_reader().read_to_string(&mut text).unwrap();
                    let body: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
                    let auth = req
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Authorization"))
                        .map(|h| h.value.to_string());
                    seen.lock().unwrap().push(Seen {
                        body: body.clone(),
                        auth,
                    });
                    let (status, out) = handler(&body);
                    let resp = tiny_http::Response::from_string(out).with_status_code(status);
                    let _ = req.respond(resp);
                }
            })
        };
        Self {
            url,
            seen,
            server,
            thread: Some(thread),
        }
    }

    /// Answer every candidate with `f(question, reference, candidate)`.
    pub fn scoring<F>(f: F) -> Self
    where
        F: Fn(&str, Option<&str>, &str) -> f64 + Send + Sync + 'static,
    {
        Self::start(move |body| {
            let q = body["question"].as_str().unwrap_or_default();
            let r = body["reference"].as_str();
            let scores: Vec<f64> = body["candidates"]
                .as_array()
                .map(|cs| cs.iter().map(|c| f(q, r, c.as_str().unwrap_or_default())).collect())
                .unwrap_or_default();
            (200, serde_json::json!({ "scores": scores }).to_string())
        })
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Ingest `docs` as a jsonl corpus under `dir/store` and build its index.
pub fn build_store(dir: &Path, docs: &[String]) -> (DocStore, InvertedIndex) {
    std::fs::create_dir_all(dir).unwrap();
    let corpus = dir.join("corpus.jsonl");
    let lines: Vec<String> = docs
        .iter()
        .map(|d| serde_json::json!({ "text": d }).to_string())
        .collect();
    std::fs::write(&corpus, lines.join("\n")).unwrap();
    let (store, _) = ingest_corpus(&corpus, CorpusFormat::Jsonl, &dir.join("store")).unwrap();
    let index = InvertedIndex::build_and_save(&store).unwrap();
    (store, index)
}

/// Materialize the planted fixture under `dir` (store, index, pairs) and
/// return it with a config pointing at it.
pub fn planted_setup(
    dir: &Path,
    params: rws_core::FixtureParams,
) -> (rws_core::PlantedFixture, rws_core::PipelineConfig) {
    let fixture = rws_core::planted_fixture(params);
    let corpus = dir.join("corpus.jsonl");
    fixture.write_corpus_jsonl(&corpus).unwrap();
    let (store, _) = ingest_corpus(&corpus, CorpusFormat::Jsonl, &dir.join("store")).unwrap();
    InvertedIndex::build_and_save(&store).unwrap();
    fixture.write_pairs(&dir.join("pairs.tsv")).unwrap();
    let config = rws_core::PipelineConfig {
        corpus_store: dir.join("store"),
        input_pairs: dir.join("pairs.tsv"),
        output: dir.join("rws.tsv"),
        ..rws_core::PipelineConfig::default()
    };
    (fixture, config)
}

/// Zipf-distributed synthetic documents: `n` docs of 20-200 words drawn from a
/// `vocab`-word vocabulary, split into sentences.
pub fn synthetic_docs(n: usize, vocab: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    use rand::distr::weighted::WeightedIndex;
    use rand::distr::Distribution;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    let zipf = WeightedIndex::new((1..=vocab).map(|r| 1.0 / r as f64)).unwrap();
    let docs = (0..n)
        .map(|_| {
            let len = rng.random_range(20..=200);
            let mut text = String::new();
            for i in 0..len {
                let w = &words[zipf.sample(&mut rng)];
                if i > 0 {
                    text.push_str(if rng.random_ratio(1, 12) { ". " } else { " " });
                }
                text.push_str(w);
            }
            text.push('.');
            text
        })
        .collect();
    (docs, words)
}

/// Tokens as a plain lowercase split on anything that is not alphanumeric.
pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Score every document with the textbook BM25 formula and rank them.
pub struct BruteForceBm25 {
    tfs: Vec<std::collections::HashMap<String, usize>>,
    lens: Vec<usize>,
    df: std::collections::HashMap<String, usize>,
    avgdl: f64,
    k1: f64,
    b: f64,
}

impl BruteForceBm25 {
    pub fn new(docs: &[String]) -> Self {
        let mut tfs = Vec::new();
        let mut lens = Vec::new();
        let mut df = std::collections::HashMap::new();
        for d in docs {
            let toks = oracle_tokens(&rws_core::corpus::normalize_text(d));
            let mut tf = std::collections::HashMap::new();
            for t in &toks {
                *tf.entry(t.clone()).or_insert(0) += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
            lens.push(toks.len());
            tfs.push(tf);
        }
        let avgdl = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
        Self {
            tfs,
            lens,
            df,
            avgdl,
            k1: 1.2,
            b: 0.75,
        }
    }

    pub fn term_postings(&self) -> std::collections::BTreeMap<String, Vec<(u32, u32)>> {
        let mut out: std::collections::BTreeMap<String, Vec<(u32, u32)>> = Default::default();
        for (d, tf) in self.tfs.iter().enumerate() {
            for (t, &n) in tf {
                out.entry(t.clone()).or_default().push((d as u32, n as u32));
            }
        }
        out
    }

    pub fn score(&self, query: &str, doc: usize) -> f64 {
        let n = self.tfs.len() as f64;
        let mut s = 0.0;
        for t in oracle_tokens(query) {
            let tf = *self.tfs[doc].get(&t).unwrap_or(&0) as f64;
            if tf == 0.0 {
                continue;
            }
            let df = self.df[&t] as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = 1.0 - self.b + self.b * self.lens[doc] as f64 / self.avgdl;
            s += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
        }
        s
    }

    /// `(doc, score)` for every positive-scoring doc, best first, ties by doc.
    pub fn rank(&self, query: &str, k: usize) -> Vec<(u32, f64)> {
        let mut all: Vec<(u32, f64)> = (0..self.tfs.len())
            .map(|d| (d as u32, self.score(query, d)))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }
}
