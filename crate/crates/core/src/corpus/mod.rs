//! Document ingestion, the on-disk document store, and sentence segmentation.
//!
//! A corpus is ingested once into a [`DocStore`] directory. Documents get
//! dense ids (`0..N`) in input order, their text is NFC-normalized and
//! stripped of control characters other than newline. The store never
//! changes after ingestion; any number of readers may share it.

mod segment;
mod store;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use unicode_normalization::UnicodeNormalization;

pub use segment::{segment_sentences, split_sentences, Segmenter, ABBREVIATIONS, DEFAULT_MAX_SENTENCE_CHARS};
pub use store::{DocStore, StoreWriter, DOCUMENTS_FILE, OFFSETS_FILE};
pub(crate) use store::write_atomic;

/// Dense document identifier, assigned in ingestion order from 0.
pub type DocId = u32;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cannot write store in {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("unknown document id {0}")]
    UnknownDocument(DocId),
}

/// A corpus unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: DocId,
    /// Provenance (URL or relative file path). May be empty.
    pub source_id: String,
    pub text: String,
}

/// One sentence of a document, addressed by `(doc_id, sent_idx)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub doc_id: DocId,
    pub sent_idx: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One JSON object per line with a required `text` and optional `url`.
    Jsonl,
    /// Every regular file below a directory is one document, in path order.
    PlainDir,
}

/// Outcome of an ingestion run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestReport {
    pub documents: usize,
    /// Records whose text was empty after normalization.
    pub skipped: usize,
}

/// NFC-normalize and clean raw text.
///
/// `\r\n` and lone `\r` become `\n`; tabs and other whitespace control
/// characters become a space; every other control character (NUL included)
/// is removed. Leading and trailing whitespace is trimmed.
pub fn normalize_text(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n");
    let mut out = String::with_capacity(unified.len());
    for c in unified.nfc() {
        match c {
            '\n' | '\r' => out.push('\n'),
            c if c.is_control() => {
                if c.is_whitespace() {
                    out.push(' ');
                }
            }
            c => out.push(c),
        }
    }
    out.trim().to_string()
}

#[derive(Deserialize)]
struct JsonlRecord {
    text: String,
    #[serde(default)]
    url: Option<String>,
}

/// Ingest `input` into a store at `store_dir` and open it.
pub fn ingest_corpus(
    input: &Path,
    format: CorpusFormat,
    store_dir: &Path,
) -> Result<(DocStore, IngestReport), CorpusError> {
    let mut writer = StoreWriter::new();
    let mut report = IngestReport::default();
    let mut push = |source: &str, raw: &str| {
        let text = normalize_text(raw);
        if text.is_empty() {
            report.skipped += 1;
        } else {
            writer.push(source, &text);
            report.documents += 1;
        }
    };

    match format {
        CorpusFormat::Jsonl => {
            let file = fs::File::open(input).map_err(|source| CorpusError::Read {
                path: input.to_path_buf(),
                source,
            })?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(|e| CorpusError::Record {
                    path: input.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: JsonlRecord =
                    serde_json::from_str(&line).map_err(|e| CorpusError::Record {
                        path: input.to_path_buf(),
                        line: line_no,
                        message: e.to_string(),
                    })?;
                push(record.url.as_deref().unwrap_or(""), &record.text);
            }
        }
        CorpusFormat::PlainDir => {
            if !input.is_dir() {
                return Err(CorpusError::Read {
                    path: input.to_path_buf(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
                });
            }
            let walker = walkdir::WalkDir::new(input).sort_by_file_name();
            for entry in walker {
                let entry = entry.map_err(|e| CorpusError::Read {
                    path: e.path().unwrap_or(input).to_path_buf(),
                    source: e.into(),
                })?;
                if !entry.file_type().is_file() {
                    continue;
                }
                let path = entry.path();
                let bytes = fs::read(path).map_err(|source| CorpusError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                let raw = String::from_utf8(bytes).map_err(|_| CorpusError::Record {
                    path: path.to_path_buf(),
                    line: 0,
                    message: "file is not valid UTF-8".into(),
                })?;
                let rel = path.strip_prefix(input).unwrap_or(path);
                let source = rel.to_string_lossy().replace('\\', "/");
                push(&source, &raw);
            }
        }
    }

    writer.write(store_dir)?;
    let store = DocStore::open(store_dir)?;
    tracing::info!(
        documents = report.documents,
        skipped = report.skipped,
        "ingested {}",
        input.display()
    );
    Ok((store, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn jsonl(dir: &Path, lines: &[&str]) -> PathBuf {
        let path = dir.join("corpus.jsonl");
        let mut f = fs::File::create(&path).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        path
    }

    #[test]
    fn dense_ids_in_input_order() {
        let dir = tempfile::tempdir().unwrap();
        let input = jsonl(
            dir.path(),
            &[
                r#"{"text": "First doc."}"#,
                r#"{"text": "Second doc.", "url": "http://b"}"#,
                r#"{"text": "Third doc."}"#,
            ],
        );
        let (store, report) =
            ingest_corpus(&input, CorpusFormat::Jsonl, &dir.path().join("s")).unwrap();
        assert_eq!(report, IngestReport { documents: 3, skipped: 0 });
        let ids: Vec<_> = store.iter().map(|d| d.doc_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(store.get(1).unwrap().source_id, "http://b");
    }

    #[test]
    fn empty_text_is_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let input = jsonl(
            dir.path(),
            &[
                r#"{"text": "a"}"#,
                r#"{"text": "  \u0000 "}"#,
                r#"{"text": "b"}"#,
                r#"{"text": "c"}"#,
            ],
        );
        let (store, report) =
            ingest_corpus(&input, CorpusFormat::Jsonl, &dir.path().join("s")).unwrap();
        assert_eq!(report.documents, 3);
        assert_eq!(report.skipped, 1);
        assert_eq!(store.len(), 3);
        assert_eq!(store.get(2).unwrap().text, "c");
    }

    #[test]
    fn bad_line_names_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let input = jsonl(dir.path(), &[r#"{"text": "ok"}"#, "{not json"]);
        let err = ingest_corpus(&input, CorpusFormat::Jsonl, &dir.path().join("s")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("corpus.jsonl:2"), "{msg}");
    }

    #[test]
    fn missing_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = ingest_corpus(
            &dir.path().join("nope.jsonl"),
            CorpusFormat::Jsonl,
            &dir.path().join("s"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("nope.jsonl"));
    }

    #[test]
    fn plain_dir_sorted_by_path() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("docs");
        fs::create_dir_all(root.join("sub")).unwrap();
        fs::write(root.join("b.txt"), "Bee.").unwrap();
        fs::write(root.join("a.txt"), "Ay.").unwrap();
        fs::write(root.join("sub/c.txt"), "Sea.").unwrap();
        let (store, _) =
            ingest_corpus(&root, CorpusFormat::PlainDir, &dir.path().join("s")).unwrap();
        let docs: Vec<_> = store.iter().map(|d| (d.source_id.clone(), d.text.clone())).collect();
        assert_eq!(
            docs,
            vec![
                ("a.txt".to_string(), "Ay.".to_string()),
                ("b.txt".to_string(), "Bee.".to_string()),
                ("sub/c.txt".to_string(), "Sea.".to_string()),
            ]
        );
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("a\r\nb\tc\u{7}d\u{0}"), "a\nb cd");
        // NFC: e + combining acute -> precomposed
        assert_eq!(normalize_text("e\u{301}"), "\u{e9}");
        assert_eq!(normalize_text(" \n "), "");
    }
}
