//! Adapters from native dataset layouts to the interchange format, and the
//! reference-pair files the pipeline consumes.
//!
//! * WikiQA native TSV: header `QuestionID Question DocumentID DocumentTitle
//!   SentenceID Sentence Label`, one candidate sentence per line.
//! * Triples TSV (the TREC-QA layout used by several AS2 releases):
//!   `question answer label`, with an optional header. Question ids are
//!   assigned as `Q1, Q2, ...` in order of first appearance.
//! * Reference pairs: `qid question reference`, no header, fields escaped
//!   like the interchange TSV.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use super::{open, parse_label, As2Dataset, As2Record, DatasetError, escape_field, unescape_field};
use crate::evaluator::ReferencePair;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn wikiqa_to_dataset(reader: impl BufRead, path: &Path) -> Result<As2Dataset, DatasetError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let cols: Vec<&str> = line.split('\t').collect();
        if line_no == 1 {
            if cols.first() != Some(&"QuestionID") {
                return Err(parse_err(path, 1, "missing WikiQA header (QuestionID ...)"));
            }
            continue;
        }
        if cols.len() != 7 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 7 WikiQA columns, found {}", cols.len()),
            ));
        }
        records.push(As2Record {
            qid: cols[0].to_string(),
            question: cols[1].to_string(),
            answer: cols[5].to_string(),
            label: parse_label(cols[6]).map_err(|m| parse_err(path, line_no, m))?,
        });
    }
    Ok(As2Dataset::from_records(records))
}

pub fn triples_to_dataset(reader: impl BufRead, path: &Path) -> Result<As2Dataset, DatasetError> {
    let mut qids: HashMap<String, String> = HashMap::new();
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let cols: Vec<&str> = line.split('\t').collect();
        if line_no == 1 && cols.len() == 3 && cols[2].eq_ignore_ascii_case("label") {
            continue;
        }
        if cols.len() != 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        let next = qids.len() + 1;
        let qid = qids
            .entry(cols[0].to_string())
            .or_insert_with(|| format!("Q{next}"))
            .clone();
        records.push(As2Record {
            qid,
            question: cols[0].to_string(),
            answer: cols[1].to_string(),
            label: parse_label(cols[2]).map_err(|m| parse_err(path, line_no, m))?,
        });
    }
    Ok(As2Dataset::from_records(records))
}

/// Every positive record becomes a `(question, reference)` pair.
pub fn reference_pairs_from_dataset(dataset: &As2Dataset) -> Vec<ReferencePair> {
    dataset
        .records()
        .filter(|r| r.label)
        .map(|r| ReferencePair {
            qid: r.qid.clone(),
            question: r.question.clone(),
            reference: r.answer.clone(),
        })
        .collect()
}

pub fn load_reference_pairs(path: &Path) -> Result<Vec<ReferencePair>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 3 columns (qid, question, reference), found {}", cols.len()),
            ));
        }
        let field = |s: &str| unescape_field(s).map_err(|m| parse_err(path, line_no, m));
        let pair = ReferencePair {
            qid: field(cols[0])?,
            question: field(cols[1])?,
            reference: field(cols[2])?,
        };
        if pair.qid.is_empty() || pair.question.trim().is_empty() || pair.reference.trim().is_empty() {
            return Err(parse_err(path, line_no, "qid, question and reference must be non-empty"));
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn write_reference_pairs(pairs: &[ReferencePair], path: &Path) -> Result<usize, DatasetError> {
    let werr = |source| DatasetError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(werr)?);
    for p in pairs {
        writeln!(
            w,
            "{}\t{}\t{}",
            escape_field(&p.qid),
            escape_field(&p.question),
            escape_field(&p.reference)
        )
        .map_err(werr)?;
    }
    w.flush().map_err(werr)?;
    Ok(pairs.len())
}
