//! Reference-based scoring of candidates and thresholding into weak labels.
//!
//! The built-in proxy compares the candidate `t` with the reference `r` and,
//! with a smaller weight, with the question `q`:
//!
//! ```text
//! score = alpha * F1(r, t) + (1 - alpha) * F1(q, t)
//! ```
//!
//! where `F1` is the harmonic mean of token-multiset precision and recall
//! (0 when either side has no tokens). A candidate is labeled positive when
//! its score is at least the threshold (inclusive).
//!
//! When a question has several references the candidate keeps the maximum
//! score over them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::corpus::DocId;
use crate::index::tokenize;
use crate::protocol::{ProtocolError, ScoreClient, DEFAULT_BATCH_SIZE, DEFAULT_MAX_IN_FLIGHT};

pub const DEFAULT_THRESHOLD: f64 = 0.9;
pub const DEFAULT_ALPHA: f64 = 0.75;

/// A question with a known-correct answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub qid: String,
    pub question: String,
    pub reference: String,
}

/// One weakly labeled `(question, answer)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub qid: String,
    pub question: String,
    pub answer: String,
    pub label: bool,
    pub eval_score: f64,
    pub doc_id: DocId,
    pub sent_idx: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    #[default]
    Proxy,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorSpec {
    pub kind: EvaluatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub alpha: f64,
    pub threshold: f64,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for EvaluatorSpec {
    fn default() -> Self {
        Self {
            kind: EvaluatorKind::Proxy,
            endpoint: None,
            alpha: DEFAULT_ALPHA,
            threshold: DEFAULT_THRESHOLD,
            batch_size: DEFAULT_BATCH_SIZE,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

impl EvaluatorSpec {
    pub fn external(endpoint: impl Into<String>) -> Self {
        Self {
            kind: EvaluatorKind::External,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let has_endpoint = self.endpoint.as_deref().is_some_and(|e| !e.is_empty());
        match self.kind {
            EvaluatorKind::External if !has_endpoint => {
                out.push("evaluator: external kind requires an endpoint".to_string())
            }
            EvaluatorKind::Proxy if has_endpoint => {
                out.push("evaluator: endpoint is only valid for the external kind".to_string())
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            out.push(format!(
                "threshold {} is outside [0, 1]",
                self.threshold
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            out.push(format!("alpha {} is outside [0, 1]", self.alpha));
        }
        if self.batch_size == 0 {
            out.push("evaluator: batch_size must be positive".to_string());
        }
        if self.max_in_flight == 0 {
            out.push("evaluator: max_in_flight must be positive".to_string());
        }
        out
    }

    fn client(&self) -> ScoreClient {
        ScoreClient::new(
            self.endpoint.clone().unwrap_or_default(),
            self.batch_size,
            self.max_in_flight,
        )
        .with_env_auth()
    }
}

fn counts(tokens: Vec<String>) -> (HashMap<String, usize>, usize) {
    let n = tokens.len();
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t).or_insert(0) += 1;
    }
    (map, n)
}

/// Token-multiset F1 between two texts.
pub fn token_f1(a: &str, b: &str) -> f64 {
    let (ca, na) = counts(tokenize(a));
    let (cb, nb) = counts(tokenize(b));
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let overlap: usize = ca
        .iter()
        .map(|(t, &n)| n.min(cb.get(t).copied().unwrap_or(0)))
        .sum();
    // 2PR/(P+R) with P = o/nb, R = o/na
    2.0 * overlap as f64 / (na + nb) as f64
}

/// Lexical stand-in for a learned answer evaluator.
pub fn proxy_eval_score(question: &str, reference: &str, candidate: &str, alpha: f64) -> f64 {
    let s = alpha * token_f1(reference, candidate) + (1.0 - alpha) * token_f1(question, candidate);
    s.clamp(0.0, 1.0)
}

/// Inclusive threshold: positive iff `score >= threshold`.
pub fn threshold_label(eval_score: f64, threshold: f64) -> bool {
    eval_score >= threshold
}

/// Score candidates with an external evaluator service.
pub fn external_eval(
    question: &str,
    reference: &str,
    candidates: &[&str],
    client: &ScoreClient,
) -> Result<Vec<f64>, ProtocolError> {
    client.score(question, Some(reference), candidates)
}

/// Label candidates against a single reference.
pub fn label_candidates(
    pair: &ReferencePair,
    candidates: &[Candidate],
    spec: &EvaluatorSpec,
) -> Result<Vec<LabeledPair>, ProtocolError> {
    label_with_references(
        &pair.qid,
        &pair.question,
        &[pair.reference.as_str()],
        candidates,
        spec,
    )
}

/// Label candidates against one or more references, keeping each
/// candidate's best score. Output order follows `candidates`.
pub fn label_with_references(
    qid: &str,
    question: &str,
    references: &[&str],
    candidates: &[Candidate],
    spec: &EvaluatorSpec,
) -> Result<Vec<LabeledPair>, ProtocolError> {
    let mut best = vec![f64::NEG_INFINITY; candidates.len()];
    match spec.kind {
        EvaluatorKind::Proxy => {
            for reference in references {
                for (b, c) in best.iter_mut().zip(candidates) {
                    *b = b.max(proxy_eval_score(question, reference, &c.text, spec.alpha));
                }
            }
        }
        EvaluatorKind::External => {
            let client = spec.client();
            let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
            for reference in references {
                let scores = external_eval(question, reference, &texts, &client)?;
                for (b, s) in best.iter_mut().zip(scores) {
                    *b = b.max(s);
                }
            }
        }
    }
    Ok(candidates
        .iter()
        .zip(best)
        .map(|(c, score)| {
            let eval_score = if score.is_finite() { score } else { 0.0 };
            LabeledPair {
                qid: qid.to_string(),
                question: question.to_string(),
                answer: c.text.clone(),
                label: threshold_label(eval_score, spec.threshold),
                eval_score,
                doc_id: c.doc_id,
                sent_idx: c.sent_idx,
            }
        })
        .collect())
}
