//! `index.bin` layout (little-endian):
//!
//! ```text
//! magic    "RWSINDEX"
//! u32      format version (1)
//! [u8;64]  hex SHA-256 of the store files the index was built from
//! u64      doc_count N
//! u32 * N  document lengths in tokens
//! u64      term count T
//! T times, ascending by term bytes:
//!   u32 term_len, term bytes, u32 posting count P,
//!   P times: u32 doc_id, u32 tf
//! ```

use std::fs;
use std::path::Path;

use super::{IndexError, IndexStats, InvertedIndex, Posting, PostingList};
use crate::corpus::DocId;

pub const INDEX_FILE: &str = "index.bin";
const MAGIC: &[u8; 8] = b"RWSINDEX";
const VERSION: u32 = 1;

impl InvertedIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut digest = [b'0'; 64];
        let d = self.store_digest.as_bytes();
        digest[..d.len().min(64)].copy_from_slice(&d[..d.len().min(64)]);
        out.extend_from_slice(&digest);
        out.extend_from_slice(&(self.stats.doc_count as u64).to_le_bytes());
        for len in &self.stats.doc_lens {
            out.extend_from_slice(&len.to_le_bytes());
        }
        out.extend_from_slice(&(self.postings.len() as u64).to_le_bytes());
        for list in &self.postings {
            out.extend_from_slice(&(list.term.len() as u32).to_le_bytes());
            out.extend_from_slice(list.term.as_bytes());
            out.extend_from_slice(&(list.entries.len() as u32).to_le_bytes());
            for p in &list.entries {
                out.extend_from_slice(&p.doc_id.to_le_bytes());
                out.extend_from_slice(&p.tf.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        crate::corpus::write_atomic(path, &self.to_bytes()).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(IndexError::Missing(path.to_path_buf()))
            }
            Err(source) => {
                return Err(IndexError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        Self::from_bytes(&bytes).map_err(|message| IndexError::Corrupt {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let store_digest = String::from_utf8(r.take(64)?.to_vec())
            .map_err(|_| "store digest is not ASCII".to_string())?;
        let n = r.u64()? as usize;
        let doc_lens = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let t = r.u64()? as usize;
        let mut postings = Vec::with_capacity(t.min(1 << 20));
        let mut prev: Option<String> = None;
        for _ in 0..t {
            let len = r.u32()? as usize;
            let term = std::str::from_utf8(r.take(len)?)
                .map_err(|_| "term is not UTF-8".to_string())?
                .to_string();
            if prev.as_ref().is_some_and(|p| *p >= term) || term.is_empty() {
                return Err(format!("terms out of order at {term:?}"));
            }
            let count = r.u32()? as usize;
            let mut entries = Vec::with_capacity(count.min(n));
            for _ in 0..count {
                let doc_id: DocId = r.u32()?;
                let tf = r.u32()?;
                if tf == 0 || doc_id as usize >= n || entries.last().is_some_and(|p: &Posting| p.doc_id >= doc_id) {
                    return Err(format!("invalid posting for {term:?}"));
                }
                entries.push(Posting { doc_id, tf });
            }
            prev = Some(term.clone());
            postings.push(PostingList { term, entries });
        }
        if r.pos != bytes.len() {
            return Err("trailing bytes".into());
        }
        Ok(Self::from_parts(
            IndexStats::from_lens(doc_lens),
            postings,
            store_digest,
        ))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "truncated".to_string())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
