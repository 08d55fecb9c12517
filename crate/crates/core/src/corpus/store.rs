//! On-disk document store.
//!
//! A store is a directory with two files, all integers little-endian:
//!
//! ```text
//! documents.bin   magic "RWSDOCS\x01"
//!                 then per document: u32 source_len, source bytes,
//!                                    u32 text_len,   text bytes
//! offsets.bin     magic "RWSOFFS\x01", u64 doc_count,
//!                 then one u64 per document: byte offset of its record
//!                 in documents.bin
//! ```
//!
//! Both files are a pure function of the ingested documents, so ingesting
//! the same input twice yields byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use super::{CorpusError, DocId, Document};
use crate::digest;

pub const DOCUMENTS_FILE: &str = "documents.bin";
pub const OFFSETS_FILE: &str = "offsets.bin";

const DOCS_MAGIC: &[u8; 8] = b"RWSDOCS\x01";
const OFFS_MAGIC: &[u8; 8] = b"RWSOFFS\x01";

/// Accumulates documents and writes a store directory.
#[derive(Debug, Default)]
pub struct StoreWriter {
    docs: Vec<u8>,
    offsets: Vec<u64>,
}

impl StoreWriter {
    pub fn new() -> Self {
        let mut docs = Vec::new();
        docs.extend_from_slice(DOCS_MAGIC);
        Self {
            docs,
            offsets: Vec::new(),
        }
    }

    /// Append a document; returns its id. `text` should already be normalized.
    pub fn push(&mut self, source_id: &str, text: &str) -> DocId {
        let id = self.offsets.len() as DocId;
        self.offsets.push(self.docs.len() as u64);
        for field in [source_id, text] {
            self.docs
                .extend_from_slice(&(field.len() as u32).to_le_bytes());
            self.docs.extend_from_slice(field.as_bytes());
        }
        id
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        let werr = |source| CorpusError::Write {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(werr)?;
        let mut offs = Vec::with_capacity(16 + 8 * self.offsets.len());
        offs.extend_from_slice(OFFS_MAGIC);
        offs.extend_from_slice(&(self.offsets.len() as u64).to_le_bytes());
        for o in &self.offsets {
            offs.extend_from_slice(&o.to_le_bytes());
        }
        write_atomic(&dir.join(DOCUMENTS_FILE), &self.docs).map_err(werr)?;
        write_atomic(&dir.join(OFFSETS_FILE), &offs).map_err(werr)?;
        Ok(())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Read-only document store, fully loaded in memory.
#[derive(Debug, Clone)]
pub struct DocStore {
    dir: PathBuf,
    docs: Vec<Document>,
}

impl DocStore {
    pub fn open(dir: &Path) -> Result<Self, CorpusError> {
        let docs_path = dir.join(DOCUMENTS_FILE);
        let offs_path = dir.join(OFFSETS_FILE);
        let read = |p: &Path| {
            fs::read(p).map_err(|source| CorpusError::Read {
                path: p.to_path_buf(),
                source,
            })
        };
        let data = read(&docs_path)?;
        let offs = read(&offs_path)?;
        let corrupt = |path: &Path, message: &str| CorpusError::Corrupt {
            path: path.to_path_buf(),
            message: message.to_string(),
        };

        if data.len() < 8 || &data[..8] != DOCS_MAGIC {
            return Err(corrupt(&docs_path, "bad magic"));
        }
        if offs.len() < 16 || &offs[..8] != OFFS_MAGIC {
            return Err(corrupt(&offs_path, "bad magic"));
        }
        let count = u64::from_le_bytes(offs[8..16].try_into().unwrap()) as usize;
        if offs.len() != 16 + 8 * count {
            return Err(corrupt(&offs_path, "length does not match document count"));
        }

        let mut docs = Vec::with_capacity(count);
        let mut expected = 8usize;
        for i in 0..count {
            let at = 16 + 8 * i;
            let offset = u64::from_le_bytes(offs[at..at + 8].try_into().unwrap()) as usize;
            if offset != expected {
                return Err(corrupt(&offs_path, &format!("offset of document {i} is inconsistent")));
            }
            let mut cursor = offset;
            let mut field = || -> Option<String> {
                let len_bytes = data.get(cursor..cursor + 4)?;
                let len = u32::from_le_bytes(len_bytes.try_into().ok()?) as usize;
                let bytes = data.get(cursor + 4..cursor + 4 + len)?;
                cursor += 4 + len;
                String::from_utf8(bytes.to_vec()).ok()
            };
            let (Some(source_id), Some(text)) = (field(), field()) else {
                return Err(corrupt(&docs_path, &format!("truncated or invalid record {i}")));
            };
            expected = cursor;
            docs.push(Document {
                doc_id: i as DocId,
                source_id,
                text,
            });
        }
        if expected != data.len() {
            return Err(corrupt(&docs_path, "trailing bytes"));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            docs,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: DocId) -> Option<&Document> {
        self.docs.get(doc_id as usize)
    }

    pub fn text(&self, doc_id: DocId) -> Result<&str, CorpusError> {
        self.get(doc_id)
            .map(|d| d.text.as_str())
            .ok_or(CorpusError::UnknownDocument(doc_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> + '_ {
        self.docs.iter()
    }

    /// Digest of the two store files.
    pub fn digest(&self) -> std::io::Result<String> {
        digest::files_sha256_hex(&[
            &self.dir.join(DOCUMENTS_FILE),
            &self.dir.join(OFFSETS_FILE),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = StoreWriter::new();
        w.push("u1", "héllo wörld");
        w.push("", "second\nline");
        w.write(dir.path()).unwrap();
        let store = DocStore::open(dir.path()).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.get(0).unwrap().text, "héllo wörld");
        assert_eq!(store.get(1).unwrap().source_id, "");
        assert!(store.get(2).is_none());
        assert!(matches!(store.text(7), Err(CorpusError::UnknownDocument(7))));
    }

    #[test]
    fn detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = StoreWriter::new();
        w.push("a", "text");
        w.write(dir.path()).unwrap();
        let p = dir.path().join(DOCUMENTS_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, bytes).unwrap();
        assert!(matches!(
            DocStore::open(dir.path()),
            Err(CorpusError::Corrupt { .. })
        ));
    }
}
