//! Inverted index and BM25 top-k retrieval.
//!
//! Scores use the standard BM25 form with the non-negative IDF variant:
//!
//! ```text
//! idf(t)        = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score(q, d)   = sum over query tokens t of
//!                 idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avg_len))
//! ```
//!
//! Query tokens are summed as given, so a token repeated in the question
//! contributes once per occurrence. Ranked lists are ordered by score
//! descending with ties broken by ascending document id.

mod format;
mod tokenizer;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use rayon::prelude::*;

use crate::corpus::{DocId, DocStore};

pub use format::INDEX_FILE;
pub use tokenizer::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot build an index over an empty store")]
    EmptyStore,
    #[error("no index found at {0} (run `rws index build` first)")]
    Missing(PathBuf),
    #[error("corrupt index {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("index at {0} was built from a different store")]
    Stale(PathBuf),
    #[error("unknown document id {0}")]
    UnknownDocument(DocId),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// BM25 saturation (`k1`) and length normalization (`b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc_id: DocId,
    pub tf: u32,
}

/// All postings of one term, strictly ascending by `doc_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingList {
    pub term: String,
    pub entries: Vec<Posting>,
}

impl PostingList {
    pub fn tf(&self, doc_id: DocId) -> u32 {
        self.entries
            .binary_search_by_key(&doc_id, |p| p.doc_id)
            .map_or(0, |i| self.entries[i].tf)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexStats {
    pub doc_count: usize,
    pub avg_doc_len: f64,
    pub doc_lens: Vec<u32>,
}

impl IndexStats {
    fn from_lens(doc_lens: Vec<u32>) -> Self {
        let total: u64 = doc_lens.iter().map(|&l| u64::from(l)).sum();
        let doc_count = doc_lens.len();
        let avg_doc_len = if doc_count == 0 {
            0.0
        } else {
            total as f64 / doc_count as f64
        };
        Self {
            doc_count,
            avg_doc_len,
            doc_lens,
        }
    }
}

/// A document and its retrieval score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: DocId,
    pub score: f64,
}

/// Score descending, then doc id ascending.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    stats: IndexStats,
    /// Sorted by term.
    postings: Vec<PostingList>,
    lookup: HashMap<String, usize>,
    store_digest: String,
    params: Bm25Params,
}

impl InvertedIndex {
    /// Build an index over every document of `store`.
    pub fn build(store: &DocStore) -> Result<Self, IndexError> {
        if store.is_empty() {
            return Err(IndexError::EmptyStore);
        }
        let store_digest = store.digest().map_err(|source| IndexError::Io {
            path: store.dir().to_path_buf(),
            source,
        })?;
        let docs: Vec<_> = store.iter().collect();
        let per_doc: Vec<(u32, BTreeMap<String, u32>)> = docs
            .par_iter()
            .map(|doc| {
                let tokens = tokenize(&doc.text);
                let mut counts = BTreeMap::new();
                for t in &tokens {
                    *counts.entry(t.clone()).or_insert(0u32) += 1;
                }
                (tokens.len() as u32, counts)
            })
            .collect();

        let mut merged: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(per_doc.len());
        for (doc_id, (len, counts)) in per_doc.into_iter().enumerate() {
            doc_lens.push(len);
            for (term, tf) in counts {
                merged.entry(term).or_default().push(Posting {
                    doc_id: doc_id as DocId,
                    tf,
                });
            }
        }
        let postings = merged
            .into_iter()
            .map(|(term, entries)| PostingList { term, entries })
            .collect();
        Ok(Self::from_parts(
            IndexStats::from_lens(doc_lens),
            postings,
            store_digest,
        ))
    }

    fn from_parts(stats: IndexStats, postings: Vec<PostingList>, store_digest: String) -> Self {
        let lookup = postings
            .iter()
            .enumerate()
            .map(|(i, p)| (p.term.clone(), i))
            .collect();
        Self {
            stats,
            postings,
            lookup,
            store_digest,
            params: Bm25Params::default(),
        }
    }

    /// Build and persist next to the store files.
    pub fn build_and_save(store: &DocStore) -> Result<Self, IndexError> {
        let index = Self::build(store)?;
        index.save(&store.dir().join(INDEX_FILE))?;
        Ok(index)
    }

    /// Open the index persisted in a store directory and check that it
    /// belongs to that store.
    pub fn open_for(store: &DocStore) -> Result<Self, IndexError> {
        let path = store.dir().join(INDEX_FILE);
        let index = Self::load(&path)?;
        let digest = store.digest().map_err(|source| IndexError::Io {
            path: store.dir().to_path_buf(),
            source,
        })?;
        if index.store_digest != digest {
            return Err(IndexError::Stale(path));
        }
        Ok(index)
    }

    pub fn with_params(mut self, params: Bm25Params) -> Self {
        self.params = params;
        self
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn store_digest(&self) -> &str {
        &self.store_digest
    }

    pub fn postings(&self, term: &str) -> Option<&PostingList> {
        self.lookup.get(term).map(|&i| &self.postings[i])
    }

    /// All posting lists in term order.
    pub fn terms(&self) -> impl Iterator<Item = &PostingList> + '_ {
        self.postings.iter()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).map_or(0, |p| p.entries.len())
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`; always positive.
    pub fn idf(&self, term: &str) -> f64 {
        idf(self.stats.doc_count, self.doc_freq(term))
    }

    fn term_weight(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = 1.0 - b + b * f64::from(doc_len) / self.stats.avg_doc_len;
        tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// BM25 score of one document for a tokenized query.
    pub fn bm25_score<S: AsRef<str>>(
        &self,
        query_terms: &[S],
        doc_id: DocId,
    ) -> Result<f64, IndexError> {
        let doc_len = *self
            .stats
            .doc_lens
            .get(doc_id as usize)
            .ok_or(IndexError::UnknownDocument(doc_id))?;
        let mut score = 0.0;
        for term in query_terms {
            let Some(list) = self.postings(term.as_ref()) else {
                continue;
            };
            let tf = list.tf(doc_id);
            if tf > 0 {
                score += idf(self.stats.doc_count, list.entries.len())
                    * self.term_weight(tf, doc_len);
            }
        }
        Ok(score)
    }

    /// Top `k1` documents for `question`; only positive scores are returned.
    pub fn retrieve_topk(&self, question: &str, k1: usize) -> Vec<ScoredDoc> {
        let query = tokenize(question);
        self.retrieve_tokens(&query, k1)
    }

    pub fn retrieve_tokens<S: AsRef<str>>(&self, query: &[S], k1: usize) -> Vec<ScoredDoc> {
        if k1 == 0 || query.is_empty() {
            return Vec::new();
        }
        let mut acc = vec![0.0f64; self.stats.doc_count];
        let mut touched: Vec<DocId> = Vec::new();
        for term in query {
            let Some(list) = self.postings(term.as_ref()) else {
                continue;
            };
            let w = idf(self.stats.doc_count, list.entries.len());
            for p in &list.entries {
                let slot = &mut acc[p.doc_id as usize];
                if *slot == 0.0 {
                    touched.push(p.doc_id);
                }
                *slot += w * self.term_weight(p.tf, self.stats.doc_lens[p.doc_id as usize]);
            }
        }
        let mut hits: Vec<ScoredDoc> = touched
            .into_iter()
            .map(|doc_id| ScoredDoc {
                doc_id,
                score: acc[doc_id as usize],
            })
            .filter(|h| h.score > 0.0)
            .collect();
        if hits.len() > k1 {
            hits.select_nth_unstable_by(k1 - 1, rank_order);
            hits.truncate(k1);
        }
        hits.sort_unstable_by(rank_order);
        hits
    }
}

/// The non-negative BM25 IDF.
pub fn idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}
