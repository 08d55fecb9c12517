//! AS2 datasets: the interchange TSV, question classes, split filtering,
//! statistics, and the weakly labeled output files.
//!
//! # Interchange TSV
//!
//! One record per line, no header, tab-separated:
//!
//! ```text
//! qid  question  answer  label
//! ```
//!
//! `label` is exactly `0` or `1`. Pipeline output adds three provenance
//! columns (`eval_score doc_id sent_idx`); the loader accepts either layout
//! and ignores the extra columns. Inside a field, backslash, tab, newline
//! and carriage return are written as `\\`, `\t`, `\n` and `\r`.

mod convert;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Add;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::evaluator::LabeledPair;

pub use convert::{
    load_reference_pairs, reference_pairs_from_dataset, triples_to_dataset, wikiqa_to_dataset,
    write_reference_pairs,
};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct As2Record {
    pub qid: String,
    pub question: String,
    pub answer: String,
    pub label: bool,
}

/// All records of one question, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionGroup {
    pub qid: String,
    pub records: Vec<As2Record>,
}

impl QuestionGroup {
    pub fn class(&self) -> QuestionClass {
        classify_question(&self.records)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct As2Dataset {
    pub groups: Vec<QuestionGroup>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionClass {
    /// Only correct answers.
    AllPlus,
    /// Only incorrect answers.
    AllMinus,
    /// Both.
    Clean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    Origin,
    WithoutAllMinus,
    CleanOnly,
}

/// `#Q`, `#A`, `#A+`, `#A-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_q: usize,
    pub num_a: usize,
    pub num_pos: usize,
    pub num_neg: usize,
}

impl Add for DatasetStats {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            num_q: self.num_q + rhs.num_q,
            num_a: self.num_a + rhs.num_a,
            num_pos: self.num_pos + rhs.num_pos,
            num_neg: self.num_neg + rhs.num_neg,
        }
    }
}

/// Output encodings for labeled pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Tsv,
    Jsonl,
}

pub fn classify_question(records: &[As2Record]) -> QuestionClass {
    let pos = records.iter().filter(|r| r.label).count();
    if pos == records.len() {
        QuestionClass::AllPlus
    } else if pos == 0 {
        QuestionClass::AllMinus
    } else {
        QuestionClass::Clean
    }
}

impl As2Dataset {
    /// Group records by qid, keeping first-appearance order of questions
    /// and file order within each question.
    pub fn from_records(records: impl IntoIterator<Item = As2Record>) -> Self {
        let mut groups: IndexMap<String, Vec<As2Record>> = IndexMap::new();
        for r in records {
            groups.entry(r.qid.clone()).or_default().push(r);
        }
        Self {
            groups: groups
                .into_iter()
                .map(|(qid, records)| QuestionGroup { qid, records })
                .collect(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &As2Record> + '_ {
        self.groups.iter().flat_map(|g| g.records.iter())
    }

    pub fn filter(&self, mode: FilterMode) -> Self {
        filter_split(self, mode)
    }

    pub fn stats(&self) -> DatasetStats {
        compute_stats(self)
    }

    /// Concatenate two datasets with disjoint question ids.
    pub fn concat(mut self, other: Self) -> Self {
        let mut merged: Vec<As2Record> = self.groups.drain(..).flat_map(|g| g.records).collect();
        merged.extend(other.groups.into_iter().flat_map(|g| g.records));
        Self::from_records(merged)
    }

    pub fn from_tsv_reader(reader: impl BufRead, path: &Path) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let parse = |message: String| DatasetError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let line = line.map_err(|e| parse(e.to_string()))?;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 && cols.len() != 7 {
                return Err(parse(format!(
                    "expected 4 columns (or 7 with provenance), found {}",
                    cols.len()
                )));
            }
            let label = parse_label(cols[3]).map_err(parse)?;
            records.push(As2Record {
                qid: unescape_field(cols[0]).map_err(parse)?,
                question: unescape_field(cols[1]).map_err(parse)?,
                answer: unescape_field(cols[2]).map_err(parse)?,
                label,
            });
        }
        Ok(Self::from_records(records))
    }

    pub fn write_tsv(&self, path: &Path) -> Result<usize, DatasetError> {
        let werr = |source| DatasetError::Write {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(werr)?);
        let mut n = 0;
        for r in self.records() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                escape_field(&r.qid),
                escape_field(&r.question),
                escape_field(&r.answer),
                u8::from(r.label)
            )
            .map_err(werr)?;
            n += 1;
        }
        w.flush().map_err(werr)?;
        Ok(n)
    }
}

pub(crate) fn parse_label(s: &str) -> Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("label must be 0 or 1, found {other:?}")),
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>, DatasetError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| DatasetError::Open {
            path: path.to_path_buf(),
            source,
        })
}

/// Load an interchange TSV.
pub fn load_as2_tsv(path: &Path) -> Result<As2Dataset, DatasetError> {
    As2Dataset::from_tsv_reader(open(path)?, path)
}

/// Keep every question (`Origin`), drop all-negative questions, or keep
/// only mixed-label questions.
pub fn filter_split(dataset: &As2Dataset, mode: FilterMode) -> As2Dataset {
    let keep = |g: &QuestionGroup| match mode {
        FilterMode::Origin => true,
        FilterMode::WithoutAllMinus => g.class() != QuestionClass::AllMinus,
        FilterMode::CleanOnly => g.class() == QuestionClass::Clean,
    };
    As2Dataset {
        groups: dataset.groups.iter().filter(|g| keep(g)).cloned().collect(),
    }
}

pub fn compute_stats(dataset: &As2Dataset) -> DatasetStats {
    let num_pos = dataset.records().filter(|r| r.label).count();
    let num_a = dataset.records().count();
    DatasetStats {
        num_q: dataset.groups.len(),
        num_a,
        num_pos,
        num_neg: num_a - num_pos,
    }
}

/// Stats of labeled pipeline output.
pub fn labeled_stats(pairs: &[LabeledPair]) -> DatasetStats {
    let qids: HashSet<&str> = pairs.iter().map(|p| p.qid.as_str()).collect();
    let num_pos = pairs.iter().filter(|p| p.label).count();
    DatasetStats {
        num_q: qids.len(),
        num_a: pairs.len(),
        num_pos,
        num_neg: pairs.len() - num_pos,
    }
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    qid: String,
    question: String,
    answer: String,
    label: u8,
    eval_score: f64,
    doc_id: u32,
    sent_idx: u32,
}

/// Append labeled pairs to `w` in the given format.
pub fn write_labeled_pairs(
    pairs: &[LabeledPair],
    mut w: impl Write,
    format: OutputFormat,
) -> std::io::Result<usize> {
    for p in pairs {
        match format {
            OutputFormat::Tsv => writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                escape_field(&p.qid),
                escape_field(&p.question),
                escape_field(&p.answer),
                u8::from(p.label),
                p.eval_score,
                p.doc_id,
                p.sent_idx
            )?,
            OutputFormat::Jsonl => {
                let row = JsonlRow {
                    qid: p.qid.clone(),
                    question: p.question.clone(),
                    answer: p.answer.clone(),
                    label: u8::from(p.label),
                    eval_score: p.eval_score,
                    doc_id: p.doc_id,
                    sent_idx: p.sent_idx,
                };
                serde_json::to_writer(&mut w, &row)?;
                w.write_all(b"\n")?;
            }
        }
    }
    Ok(pairs.len())
}

/// Write labeled pairs to `path`; pairs should already be in canonical
/// `(qid, rerank rank)` order.
pub fn emit_labeled_pairs(
    pairs: &[LabeledPair],
    path: &Path,
    format: OutputFormat,
) -> Result<usize, DatasetError> {
    let werr = |source| DatasetError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(werr)?);
    let n = write_labeled_pairs(pairs, &mut w, format).map_err(werr)?;
    w.flush().map_err(werr)?;
    Ok(n)
}

/// Read back a file written by [`emit_labeled_pairs`].
pub fn load_labeled_pairs(path: &Path, format: OutputFormat) -> Result<Vec<LabeledPair>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line_no = i + 1;
        let parse = |message: String| DatasetError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let line = line.map_err(|e| parse(e.to_string()))?;
        let pair = match format {
            OutputFormat::Jsonl => {
                let row: JsonlRow = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
                LabeledPair {
                    qid: row.qid,
                    question: row.question,
                    answer: row.answer,
                    label: parse_label(&row.label.to_string()).map_err(parse)?,
                    eval_score: row.eval_score,
                    doc_id: row.doc_id,
                    sent_idx: row.sent_idx,
                }
            }
            OutputFormat::Tsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 7 {
                    return Err(parse(format!("expected 7 columns, found {}", cols.len())));
                }
                let num = |s: &str| s.parse().map_err(|_| parse(format!("bad number {s:?}")));
                LabeledPair {
                    qid: unescape_field(cols[0]).map_err(parse)?,
                    question: unescape_field(cols[1]).map_err(parse)?,
                    answer: unescape_field(cols[2]).map_err(parse)?,
                    label: parse_label(cols[3]).map_err(parse)?,
                    eval_score: cols[4]
                        .parse()
                        .map_err(|_| parse(format!("bad score {:?}", cols[4])))?,
                    doc_id: num(cols[5])?,
                    sent_idx: num(cols[6])?,
                }
            }
        };
        out.push(pair);
    }
    Ok(out)
}
