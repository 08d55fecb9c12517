//! Candidate pooling, reranking and top-`k2` selection.
//!
//! The pool for a question is every sentence of every retrieved document,
//! deduplicated by exact text. The first occurrence wins, walking documents
//! in retrieval rank order and sentences in document order.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, DocId, DocStore, Segmenter};
use crate::index::{tokenize, InvertedIndex, ScoredDoc};
use crate::protocol::{ProtocolError, ScoreClient, DEFAULT_BATCH_SIZE, DEFAULT_MAX_IN_FLIGHT};

/// A sentence drawn from a retrieved document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub qid: String,
    pub doc_id: DocId,
    pub sent_idx: u32,
    pub text: String,
    /// BM25 score of the source document.
    pub retrieval_score: f64,
    /// Reranker probability in `[0, 1]`; `None` until reranked.
    pub rerank_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankerKind {
    #[default]
    Lexical,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankerSpec {
    pub kind: RerankerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for RerankerSpec {
    fn default() -> Self {
        Self {
            kind: RerankerKind::Lexical,
            endpoint: None,
            batch_size: DEFAULT_BATCH_SIZE,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

impl RerankerSpec {
    pub fn external(endpoint: impl Into<String>) -> Self {
        Self {
            kind: RerankerKind::External,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    /// One message per violated invariant.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let has_endpoint = self.endpoint.as_deref().is_some_and(|e| !e.is_empty());
        match self.kind {
            RerankerKind::External if !has_endpoint => {
                out.push("reranker: external kind requires an endpoint".to_string())
            }
            RerankerKind::Lexical if has_endpoint => {
                out.push("reranker: endpoint is only valid for the external kind".to_string())
            }
            _ => {}
        }
        if self.batch_size == 0 {
            out.push("reranker: batch_size must be positive".to_string());
        }
        if self.max_in_flight == 0 {
            out.push("reranker: max_in_flight must be positive".to_string());
        }
        out
    }
}

/// Pool the sentences of the retrieved documents into unscored candidates.
pub fn pool_candidates(
    qid: &str,
    retrieved: &[ScoredDoc],
    store: &DocStore,
    segmenter: &Segmenter,
) -> Result<Vec<Candidate>, CorpusError> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut out = Vec::new();
    for hit in retrieved {
        let text = store.text(hit.doc_id)?;
        for (sent_idx, sentence) in segmenter.split(text).into_iter().enumerate() {
            if seen.insert(sentence) {
                out.push(Candidate {
                    qid: qid.to_string(),
                    doc_id: hit.doc_id,
                    sent_idx: sent_idx as u32,
                    text: sentence.to_string(),
                    retrieval_score: hit.score,
                    rerank_score: None,
                });
            }
        }
    }
    Ok(out)
}

/// Anything that can report an IDF weight for a token.
pub trait IdfSource {
    fn idf(&self, term: &str) -> f64;
}

impl IdfSource for InvertedIndex {
    fn idf(&self, term: &str) -> f64 {
        InvertedIndex::idf(self, term)
    }
}

impl IdfSource for HashMap<String, f64> {
    fn idf(&self, term: &str) -> f64 {
        self.get(term).copied().unwrap_or(0.0)
    }
}

/// IDF-weighted coverage of the question's distinct tokens.
#[derive(Debug, Clone)]
pub struct LexicalReranker {
    weights: Vec<(String, f64)>,
    total: f64,
}

impl LexicalReranker {
    pub fn new(question: &str, idf: &impl IdfSource) -> Self {
        let mut seen = HashSet::new();
        let weights: Vec<(String, f64)> = tokenize(question)
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .map(|t| {
                let w = idf.idf(&t);
                (t, w)
            })
            .collect();
        let total = weights.iter().map(|(_, w)| w).sum();
        Self { weights, total }
    }

    pub fn score(&self, candidate_text: &str) -> f64 {
        if self.total <= 0.0 {
            return 0.0;
        }
        let tokens: HashSet<String> = tokenize(candidate_text).into_iter().collect();
        let covered: f64 = self
            .weights
            .iter()
            .filter(|(t, _)| tokens.contains(t))
            .map(|(_, w)| w)
            .sum();
        (covered / self.total).clamp(0.0, 1.0)
    }
}

/// `sum idf(t) for distinct question tokens in the candidate / sum idf(t) for
/// all distinct question tokens`, or 0 for a token-less question.
pub fn lexical_rerank_score(question: &str, candidate_text: &str, idf: &impl IdfSource) -> f64 {
    LexicalReranker::new(question, idf).score(candidate_text)
}

/// Fill `rerank_score` on every candidate.
pub fn rerank(
    question: &str,
    candidates: &mut [Candidate],
    spec: &RerankerSpec,
    index: &InvertedIndex,
) -> Result<(), ProtocolError> {
    match spec.kind {
        RerankerKind::Lexical => {
            let scorer = LexicalReranker::new(question, index);
            for c in candidates.iter_mut() {
                c.rerank_score = Some(scorer.score(&c.text));
            }
            Ok(())
        }
        RerankerKind::External => {
            let client = ScoreClient::new(
                spec.endpoint.clone().unwrap_or_default(),
                spec.batch_size,
                spec.max_in_flight,
            )
            .with_env_auth();
            external_rerank(question, candidates, &client)
        }
    }
}

/// Score candidates through an external reranking service.
pub fn external_rerank(
    question: &str,
    candidates: &mut [Candidate],
    client: &ScoreClient,
) -> Result<(), ProtocolError> {
    let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
    let scores = client.score(question, None, &texts)?;
    for (c, s) in candidates.iter_mut().zip(scores) {
        c.rerank_score = Some(s);
    }
    Ok(())
}

/// Rerank order: score descending, then retrieval score descending, doc id
/// ascending, sentence index ascending. Unscored candidates sort last.
pub fn selection_order(a: &Candidate, b: &Candidate) -> Ordering {
    let score = |c: &Candidate| c.rerank_score.unwrap_or(f64::NEG_INFINITY);
    score(b)
        .total_cmp(&score(a))
        .then_with(|| b.retrieval_score.total_cmp(&a.retrieval_score))
        .then_with(|| a.doc_id.cmp(&b.doc_id))
        .then_with(|| a.sent_idx.cmp(&b.sent_idx))
}

/// Keep the best `k2` candidates in selection order.
pub fn select_topk2(mut candidates: Vec<Candidate>, k2: usize) -> Vec<Candidate> {
    candidates.sort_by(selection_order);
    candidates.truncate(k2);
    candidates
}
