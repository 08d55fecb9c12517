//! P@1, MAP and MRR over per-question ranked lists.
//!
//! Questions without any positive answer cannot be scored; they are
//! skipped and counted in [`MetricReport::num_questions_skipped`] rather
//! than contributing a zero.

use std::collections::{HashMap, VecDeque};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{self, unescape_field, As2Dataset, DatasetError};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("ranked list for {0} is empty")]
    Empty(String),
    #[error("ranked list for {0} has a non-finite score")]
    NonFinite(String),
    #[error("ranked list for {qid} is not sorted by descending score at position {position}")]
    Unsorted { qid: String, position: usize },
    #[error("no question has a positive answer; nothing to score")]
    NoScorableQuestions,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}:{line}: {message}")]
    Scores {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no score for question {qid:?}, answer {answer:?}")]
    MissingScore { qid: String, answer: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub score: f64,
    pub label: bool,
}

/// Candidates of one question ordered by score, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    qid: String,
    entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Wrap entries that are already in ranking order.
    pub fn new(qid: impl Into<String>, entries: Vec<RankedEntry>) -> Result<Self, MetricsError> {
        let qid = qid.into();
        if entries.is_empty() {
            return Err(MetricsError::Empty(qid));
        }
        if entries.iter().any(|e| !e.score.is_finite()) {
            return Err(MetricsError::NonFinite(qid));
        }
        if let Some(position) = entries.windows(2).position(|w| w[0].score < w[1].score) {
            return Err(MetricsError::Unsorted {
                qid,
                position: position + 1,
            });
        }
        Ok(Self { qid, entries })
    }

    /// Sort by score descending; equal scores keep their input order.
    pub fn from_scores(
        qid: impl Into<String>,
        mut entries: Vec<RankedEntry>,
    ) -> Result<Self, MetricsError> {
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        Self::new(qid, entries)
    }

    /// Labels already in rank order; scores are synthesized.
    pub fn from_labels(qid: impl Into<String>, labels: &[bool]) -> Result<Self, MetricsError> {
        let n = labels.len();
        let entries = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| RankedEntry {
                score: (n - i) as f64,
                label,
            })
            .collect();
        Self::new(qid, entries)
    }

    pub fn qid(&self) -> &str {
        &self.qid
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = bool> + '_ {
        self.entries.iter().map(|e| e.label)
    }

    pub fn has_positive(&self) -> bool {
        self.labels().any(|l| l)
    }
}

/// `(1/P) * sum of precision@k over positive ranks k`; `None` without positives.
pub fn average_precision(list: &RankedList) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, label) in list.labels().enumerate() {
        if label {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// `1 / rank` of the first positive; `None` without positives.
pub fn reciprocal_rank(list: &RankedList) -> Option<f64> {
    list.labels()
        .position(|l| l)
        .map(|i| 1.0 / (i + 1) as f64)
}

/// Label of the top entry as 0 or 1; `None` without positives.
pub fn precision_at_1(list: &RankedList) -> Option<f64> {
    list.has_positive()
        .then(|| if list.entries[0].label { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub p_at_1: f64,
    pub map: f64,
    pub mrr: f64,
    pub num_questions_scored: usize,
    pub num_questions_skipped: usize,
}

/// Unweighted means over the questions that have a positive answer.
pub fn aggregate(lists: &[RankedList]) -> Result<MetricReport, MetricsError> {
    let (mut p1, mut ap, mut rr) = (0.0, 0.0, 0.0);
    let mut scored = 0usize;
    for list in lists {
        let (Some(a), Some(r), Some(p)) = (
            average_precision(list),
            reciprocal_rank(list),
            precision_at_1(list),
        ) else {
            continue;
        };
        ap += a;
        rr += r;
        p1 += p;
        scored += 1;
    }
    if scored == 0 {
        return Err(MetricsError::NoScorableQuestions);
    }
    let n = scored as f64;
    Ok(MetricReport {
        p_at_1: p1 / n,
        map: ap / n,
        mrr: rr / n,
        num_questions_scored: scored,
        num_questions_skipped: lists.len() - scored,
    })
}

/// A `qid answer score` row of a system's score file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub qid: String,
    pub answer: String,
    pub score: f64,
    pub line: usize,
}

pub fn parse_score_rows(reader: impl BufRead, path: &Path) -> Result<Vec<ScoreRow>, MetricsError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| MetricsError::Scores {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(err(format!(
                "expected 3 columns (qid, answer, score), found {}",
                cols.len()
            )));
        }
        let score: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("score {:?} is not a number", cols[2])))?;
        if !score.is_finite() {
            return Err(err(format!("score {score} is not finite")));
        }
        rows.push(ScoreRow {
            qid: unescape_field(cols[0]).map_err(&err)?,
            answer: unescape_field(cols[1]).map_err(&err)?,
            score,
            line: line_no,
        });
    }
    Ok(rows)
}

/// Join gold labels with system scores on `(qid, answer)` and rank each
/// question. Every gold row needs a score and every score row a gold row.
pub fn join_scores(
    gold: &As2Dataset,
    scores: Vec<ScoreRow>,
    scores_path: &Path,
) -> Result<Vec<RankedList>, MetricsError> {
    let mut by_key: HashMap<(String, String), VecDeque<ScoreRow>> = HashMap::new();
    for row in scores {
        by_key
            .entry((row.qid.clone(), row.answer.clone()))
            .or_default()
            .push_back(row);
    }
    let mut lists = Vec::with_capacity(gold.groups.len());
    for group in &gold.groups {
        let mut entries = Vec::with_capacity(group.records.len());
        for r in &group.records {
            let row = by_key
                .get_mut(&(r.qid.clone(), r.answer.clone()))
                .and_then(VecDeque::pop_front)
                .ok_or_else(|| MetricsError::MissingScore {
                    qid: r.qid.clone(),
                    answer: r.answer.clone(),
                })?;
            entries.push(RankedEntry {
                score: row.score,
                label: r.label,
            });
        }
        lists.push(RankedList::from_scores(group.qid.clone(), entries)?);
    }
    if let Some(row) = by_key.into_values().flatten().min_by_key(|r| r.line) {
        return Err(MetricsError::Scores {
            path: scores_path.to_path_buf(),
            line: row.line,
            message: format!(
                "no gold row for question {:?}, answer {:?}",
                row.qid, row.answer
            ),
        });
    }
    Ok(lists)
}

/// Grade a score file against a gold interchange TSV.
pub fn grade(gold_path: &Path, scores_path: &Path) -> Result<MetricReport, MetricsError> {
    let gold = datasets::load_as2_tsv(gold_path)?;
    let file = std::fs::File::open(scores_path).map_err(|source| DatasetError::Open {
        path: scores_path.to_path_buf(),
        source,
    })?;
    let rows = parse_score_rows(std::io::BufReader::new(file), scores_path)?;
    aggregate(&join_scores(&gold, rows, scores_path)?)
}
