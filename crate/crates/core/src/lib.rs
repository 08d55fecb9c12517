//! Reference-based weak supervision for answer sentence selection (AS2).
//!
//! Starting from `(question, reference answer)` pairs and a text corpus, the
//! pipeline in this crate:
//!
//! 1. retrieves the top `k1` documents for the question with BM25 ([`index`]),
//! 2. splits them into sentences and pools them into a candidate set
//!    ([`corpus`], [`candidates`]),
//! 3. reranks the pool and keeps the top `k2` ([`candidates`]),
//! 4. scores each kept candidate against the reference answer and thresholds
//!    the score into a weak label ([`evaluator`]).
//!
//! The labeled pairs are written in the AS2 interchange formats of
//! [`datasets`], and [`metrics`] grades rankings with P@1, MAP and MRR.
//! [`pipeline`] wires the stages together with checkpointing and
//! deterministic parallelism.

pub mod candidates;
pub mod corpus;
pub mod datasets;
pub mod digest;
pub mod evaluator;
pub mod fixture;
pub mod index;
pub mod metrics;
pub mod pipeline;
pub mod protocol;

pub use candidates::{Candidate, RerankerKind, RerankerSpec};
pub use corpus::{DocStore, Document, Sentence};
pub use datasets::{As2Dataset, As2Record, DatasetStats, QuestionClass};
pub use evaluator::{EvaluatorKind, EvaluatorSpec, LabeledPair, ReferencePair};
pub use index::{Bm25Params, InvertedIndex};
pub use metrics::{MetricReport, RankedList};
pub use pipeline::{run_pipeline, validate_config, PipelineConfig, RunOptions, RunReport, Stage};
pub use fixture::{planted_fixture, FixtureParams, PlantedFixture};
