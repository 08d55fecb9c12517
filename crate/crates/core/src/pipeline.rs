//! End-to-end orchestration: retrieve, pool, rerank and select, label, emit.
//!
//! Work runs stage by stage over all questions. After each stage the state of
//! every question is written to `<output>.ckpt/` so an interrupted run can be
//! resumed from the last finished stage. Questions are processed by a rayon
//! pool of `parallelism` workers, but every result is collected back in qid
//! order, so the output file and manifest do not depend on scheduling.
//!
//! Configuration is TOML. Every key is optional:
//!
//! ```toml
//! k1 = 1000
//! k2 = 25
//! threshold = 0.9
//! corpus_store = "store"      # relative paths resolve against the config file
//! input_pairs = "pairs.tsv"
//! output = "rws.tsv"
//! output_format = "tsv"       # or "jsonl"
//! parallelism = 1
//! max_sentence_chars = 1000
//! keep_checkpoints = false
//!
//! [reranker]
//! kind = "lexical"            # or "external" with endpoint = "http://..."
//!
//! [evaluator]
//! kind = "proxy"              # or "external" with endpoint = "http://..."
//! alpha = 0.75
//! ```

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::candidates::{pool_candidates, rerank, select_topk2, Candidate, RerankerKind, RerankerSpec};
use crate::corpus::{write_atomic, CorpusError, DocId, DocStore, Segmenter, DEFAULT_MAX_SENTENCE_CHARS};
use crate::datasets::{
    labeled_stats, load_reference_pairs, write_labeled_pairs, DatasetError, DatasetStats,
    OutputFormat,
};
use crate::digest::{file_sha256_hex, sha256_hex};
use crate::evaluator::{label_with_references, EvaluatorKind, EvaluatorSpec, LabeledPair};
use crate::index::{IndexError, InvertedIndex, ScoredDoc, INDEX_FILE};

pub const DEFAULT_K1: usize = 1000;
pub const DEFAULT_K2: usize = 25;
/// Share of failed questions above which a run counts as failed.
pub const FAILURE_BUDGET: f64 = 0.10;

const MANIFEST_VERSION: u32 = 1;
const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("cannot read config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub k1: usize,
    pub k2: usize,
    /// Inclusive label threshold; copied into `evaluator.threshold` by
    /// [`validate_config`].
    pub threshold: f64,
    pub reranker: RerankerSpec,
    pub evaluator: EvaluatorSpec,
    pub corpus_store: PathBuf,
    pub input_pairs: PathBuf,
    pub output: PathBuf,
    pub output_format: OutputFormat,
    pub parallelism: usize,
    pub max_sentence_chars: usize,
    pub keep_checkpoints: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let evaluator = EvaluatorSpec::default();
        Self {
            k1: DEFAULT_K1,
            k2: DEFAULT_K2,
            threshold: evaluator.threshold,
            reranker: RerankerSpec::default(),
            evaluator,
            corpus_store: PathBuf::from("store"),
            input_pairs: PathBuf::from("pairs.tsv"),
            output: PathBuf::from("rws.tsv"),
            output_format: OutputFormat::Tsv,
            parallelism: 1,
            max_sentence_chars: DEFAULT_MAX_SENTENCE_CHARS,
            keep_checkpoints: false,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    k1: Option<usize>,
    k2: Option<usize>,
    threshold: Option<f64>,
    corpus_store: Option<PathBuf>,
    input_pairs: Option<PathBuf>,
    output: Option<PathBuf>,
    output_format: Option<OutputFormat>,
    parallelism: Option<usize>,
    max_sentence_chars: Option<usize>,
    keep_checkpoints: Option<bool>,
    reranker: Option<RerankerSection>,
    evaluator: Option<EvaluatorSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RerankerSection {
    kind: Option<RerankerKind>,
    endpoint: Option<String>,
    batch_size: Option<usize>,
    max_in_flight: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluatorSection {
    kind: Option<EvaluatorKind>,
    endpoint: Option<String>,
    alpha: Option<f64>,
    batch_size: Option<usize>,
    max_in_flight: Option<usize>,
}

impl PipelineConfig {
    /// Parse TOML; relative paths are resolved against `base_dir`. The result
    /// is not validated.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, String> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut c = Self::default();
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        c.k1 = file.k1.unwrap_or(c.k1);
        c.k2 = file.k2.unwrap_or(c.k2);
        c.threshold = file.threshold.unwrap_or(c.threshold);
        c.corpus_store = resolve(file.corpus_store.unwrap_or(c.corpus_store));
        c.input_pairs = resolve(file.input_pairs.unwrap_or(c.input_pairs));
        c.output = resolve(file.output.unwrap_or(c.output));
        c.output_format = file.output_format.unwrap_or(c.output_format);
        c.parallelism = file.parallelism.unwrap_or(c.parallelism);
        c.max_sentence_chars = file.max_sentence_chars.unwrap_or(c.max_sentence_chars);
        c.keep_checkpoints = file.keep_checkpoints.unwrap_or(c.keep_checkpoints);
        if let Some(r) = file.reranker {
            c.reranker.kind = r.kind.unwrap_or(c.reranker.kind);
            c.reranker.endpoint = r.endpoint;
            c.reranker.batch_size = r.batch_size.unwrap_or(c.reranker.batch_size);
            c.reranker.max_in_flight = r.max_in_flight.unwrap_or(c.reranker.max_in_flight);
        }
        if let Some(e) = file.evaluator {
            c.evaluator.kind = e.kind.unwrap_or(c.evaluator.kind);
            c.evaluator.endpoint = e.endpoint;
            c.evaluator.alpha = e.alpha.unwrap_or(c.evaluator.alpha);
            c.evaluator.batch_size = e.batch_size.unwrap_or(c.evaluator.batch_size);
            c.evaluator.max_in_flight = e.max_in_flight.unwrap_or(c.evaluator.max_in_flight);
        }
        c.evaluator.threshold = c.threshold;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|message| PipelineError::ConfigFile {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn manifest_path(&self) -> PathBuf {
        sibling(&self.output, ".manifest.json")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        sibling(&self.output, ".ckpt")
    }

    /// The settings that determine the output; paths and parallelism are
    /// left out.
    pub fn fingerprint(&self) -> ConfigFingerprint {
        ConfigFingerprint {
            k1: self.k1,
            k2: self.k2,
            threshold: self.threshold,
            reranker: self.reranker.clone(),
            evaluator: EvaluatorSpec {
                threshold: self.threshold,
                ..self.evaluator.clone()
            },
            output_format: self.output_format,
            max_sentence_chars: self.max_sentence_chars,
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

/// Check every invariant and report all violations at once. On success the
/// evaluator threshold is synchronized with `threshold`.
pub fn validate_config(config: &PipelineConfig) -> Result<PipelineConfig, Vec<String>> {
    let mut c = config.clone();
    c.evaluator.threshold = c.threshold;
    let mut errors = Vec::new();
    if c.k1 == 0 {
        errors.push("k1 must be positive".to_string());
    }
    if c.k2 == 0 {
        errors.push("k2 must be positive".to_string());
    }
    if c.k2 > c.k1 {
        errors.push(format!("k2 exceeds k1 ({} > {})", c.k2, c.k1));
    }
    if c.parallelism == 0 {
        errors.push("parallelism must be positive".to_string());
    }
    if c.max_sentence_chars == 0 {
        errors.push("max_sentence_chars must be positive".to_string());
    }
    errors.extend(c.reranker.problems());
    errors.extend(c.evaluator.problems());
    if errors.is_empty() {
        Ok(c)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub k1: usize,
    pub k2: usize,
    pub threshold: f64,
    pub reranker: RerankerSpec,
    pub evaluator: EvaluatorSpec,
    pub output_format: OutputFormat,
    pub max_sentence_chars: usize,
}

impl ConfigFingerprint {
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Retrieved,
    Pooled,
    Reranked,
    Labeled,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Retrieved, Stage::Pooled, Stage::Reranked, Stage::Labeled];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Retrieved => "retrieved",
            Stage::Pooled => "pooled",
            Stage::Reranked => "reranked",
            Stage::Labeled => "labeled",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionStatus {
    Ok,
    NoRetrieval,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionEntry {
    pub qid: String,
    pub references: usize,
    pub retrieved: usize,
    pub pooled: usize,
    pub selected: usize,
    pub labeled: usize,
    pub positive: usize,
    pub status: QuestionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub questions: usize,
    pub retrieved: usize,
    pub pooled: usize,
    pub selected: usize,
    pub labeled: usize,
    pub positive: usize,
    pub no_retrieval: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: ConfigFingerprint,
    pub config_digest: String,
    pub corpus_digest: String,
    pub index_digest: String,
    pub input_digest: String,
    pub output_digest: String,
    pub counts: StageCounts,
    pub stats: DatasetStats,
    pub questions: Vec<QuestionEntry>,
}

/// A step of the per-question state carried between stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct QuestionState {
    qid: String,
    #[serde(skip)]
    question: String,
    #[serde(skip)]
    references: Vec<String>,
    entry: QuestionEntry,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    retrieved: Vec<(DocId, f64)>,
    /// `(doc_id, sent_idx, retrieval_score)`; text is recovered from the store.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pooled: Vec<(DocId, u32, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    selected: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labeled: Vec<LabeledPair>,
}

impl QuestionState {
    fn active(&self) -> bool {
        self.entry.status == QuestionStatus::Ok
    }

    fn fail(&mut self, stage: Stage, message: String) {
        warn!(qid = %self.qid, %stage, "question failed: {message}");
        self.entry.status = QuestionStatus::Failed;
        self.entry.note = Some(format!("{stage}: {message}"));
        self.pooled.clear();
        self.selected.clear();
        self.labeled.clear();
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    stage: Stage,
    completed_qids: Vec<String>,
    config_digest: String,
    corpus_digest: String,
    input_digest: String,
    stage_digest: String,
}

/// Options that do not affect the output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue from the checkpoint of a previous run, if one exists.
    pub resume: bool,
    /// Stop after writing the checkpoint for this stage, as if interrupted.
    pub stop_after: Option<Stage>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub labeled: Vec<LabeledPair>,
    /// Set when the run ended early because of [`RunOptions::stop_after`].
    pub stopped_after: Option<Stage>,
}

impl RunReport {
    pub fn stats(&self) -> DatasetStats {
        self.manifest.stats
    }

    pub fn failure_rate(&self) -> f64 {
        let c = &self.manifest.counts;
        if c.questions == 0 {
            0.0
        } else {
            c.failed as f64 / c.questions as f64
        }
    }

    pub fn exceeds_failure_budget(&self) -> bool {
        self.failure_rate() > FAILURE_BUDGET
    }
}

struct Context<'a> {
    config: &'a PipelineConfig,
    store: &'a DocStore,
    index: &'a InvertedIndex,
    segmenter: Segmenter,
    pool: rayon::ThreadPool,
}

impl Context<'_> {
    fn par_each(&self, states: &mut [QuestionState], f: impl Fn(&mut QuestionState) + Sync) {
        self.pool
            .install(|| states.par_iter_mut().filter(|s| s.active()).for_each(&f));
    }

    fn retrieve(&self, states: &mut [QuestionState]) {
        self.par_each(states, |s| {
            let hits = self.index.retrieve_topk(&s.question, self.config.k1);
            s.entry.retrieved = hits.len();
            s.retrieved = hits.iter().map(|h| (h.doc_id, h.score)).collect();
            if hits.is_empty() {
                s.entry.status = QuestionStatus::NoRetrieval;
                s.entry.note = Some("no retrieval".to_string());
            }
        });
    }

    fn pool(&self, states: &mut [QuestionState]) -> Result<(), CorpusError> {
        let errors = std::sync::Mutex::new(Vec::new());
        self.par_each(states, |s| {
            let hits: Vec<ScoredDoc> = s
                .retrieved
                .iter()
                .map(|&(doc_id, score)| ScoredDoc { doc_id, score })
                .collect();
            match pool_candidates(&s.qid, &hits, self.store, &self.segmenter) {
                Ok(pool) => {
                    s.entry.pooled = pool.len();
                    s.pooled = pool
                        .iter()
                        .map(|c| (c.doc_id, c.sent_idx, c.retrieval_score))
                        .collect();
                    s.retrieved.clear();
                }
                Err(e) => errors.lock().unwrap().push(e),
            }
        });
        match errors.into_inner().unwrap().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn materialize(&self, s: &QuestionState) -> Result<Vec<Candidate>, CorpusError> {
        let mut split_cache: BTreeMap<DocId, Vec<&str>> = BTreeMap::new();
        let mut out = Vec::with_capacity(s.pooled.len());
        for &(doc_id, sent_idx, retrieval_score) in &s.pooled {
            let sentences = match split_cache.entry(doc_id) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => e.insert(self.segmenter.split(self.store.text(doc_id)?)),
            };
            let text = sentences
                .get(sent_idx as usize)
                .ok_or(CorpusError::UnknownDocument(doc_id))?;
            out.push(Candidate {
                qid: s.qid.clone(),
                doc_id,
                sent_idx,
                text: text.to_string(),
                retrieval_score,
                rerank_score: None,
            });
        }
        Ok(out)
    }

    fn rerank_select(&self, states: &mut [QuestionState]) -> Result<(), CorpusError> {
        let errors = std::sync::Mutex::new(Vec::new());
        self.par_each(states, |s| {
            let mut pool = match self.materialize(s) {
                Ok(p) => p,
                Err(e) => return errors.lock().unwrap().push(e),
            };
            match rerank(&s.question, &mut pool, &self.config.reranker, self.index) {
                Ok(()) => {
                    s.selected = select_topk2(pool, self.config.k2);
                    s.entry.selected = s.selected.len();
                    s.pooled.clear();
                }
                Err(e) => s.fail(Stage::Reranked, e.to_string()),
            }
        });
        match errors.into_inner().unwrap().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn label(&self, states: &mut [QuestionState]) {
        self.par_each(states, |s| {
            let refs: Vec<&str> = s.references.iter().map(String::as_str).collect();
            match label_with_references(
                &s.qid,
                &s.question,
                &refs,
                &s.selected,
                &self.config.evaluator,
            ) {
                Ok(pairs) => {
                    s.entry.labeled = pairs.len();
                    s.entry.positive = pairs.iter().filter(|p| p.label).count();
                    s.labeled = pairs;
                    s.selected.clear();
                }
                Err(e) => s.fail(Stage::Labeled, e.to_string()),
            }
        });
    }
}

/// Group reference pairs by qid (ascending). The first question text seen
/// for a qid is kept; every reference is kept in input order.
fn group_questions(pairs: Vec<crate::evaluator::ReferencePair>) -> Vec<QuestionState> {
    let mut by_qid: BTreeMap<String, QuestionState> = BTreeMap::new();
    for p in pairs {
        let state = by_qid.entry(p.qid.clone()).or_insert_with(|| QuestionState {
            qid: p.qid.clone(),
            question: p.question.clone(),
            references: Vec::new(),
            entry: QuestionEntry {
                qid: p.qid.clone(),
                references: 0,
                retrieved: 0,
                pooled: 0,
                selected: 0,
                labeled: 0,
                positive: 0,
                status: QuestionStatus::Ok,
                note: None,
            },
            retrieved: Vec::new(),
            pooled: Vec::new(),
            selected: Vec::new(),
            labeled: Vec::new(),
        });
        state.references.push(p.reference);
        state.entry.references += 1;
    }
    by_qid.into_values().collect()
}

struct Digests {
    config: String,
    corpus: String,
    index: String,
    input: String,
}

fn write_checkpoint(
    dir: &Path,
    stage: Stage,
    states: &[QuestionState],
    digests: &Digests,
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let data = serde_json::to_vec(states).expect("state serializes");
    let stage_path = dir.join(format!("{stage}.json"));
    write_atomic(&stage_path, &data).map_err(io_err(&stage_path))?;
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        stage,
        completed_qids: states.iter().map(|s| s.qid.clone()).collect(),
        config_digest: digests.config.clone(),
        corpus_digest: digests.corpus.clone(),
        input_digest: digests.input.clone(),
        stage_digest: sha256_hex(&data),
    };
    let header_path = dir.join(CHECKPOINT_FILE);
    write_atomic(
        &header_path,
        &serde_json::to_vec_pretty(&header).expect("header serializes"),
    )
    .map_err(io_err(&header_path))?;
    // Older stage files are no longer needed.
    for other in Stage::ALL.into_iter().filter(|&s| s != stage) {
        let _ = std::fs::remove_file(dir.join(format!("{other}.json")));
    }
    info!(%stage, "checkpoint written");
    Ok(())
}

/// Load the checkpoint in `dir`, if any, into `states`. Returns the stage it
/// was taken after.
fn read_checkpoint(
    dir: &Path,
    states: &mut [QuestionState],
    digests: &Digests,
) -> Result<Option<Stage>, PipelineError> {
    let header_path = dir.join(CHECKPOINT_FILE);
    if !header_path.exists() {
        return Ok(None);
    }
    let bad = |message: String| PipelineError::Checkpoint {
        path: dir.to_path_buf(),
        message,
    };
    let raw = std::fs::read(&header_path).map_err(io_err(&header_path))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&raw).map_err(|e| bad(format!("unreadable header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    for (what, saved, now) in [
        ("configuration", &header.config_digest, &digests.config),
        ("corpus", &header.corpus_digest, &digests.corpus),
        ("input pairs", &header.input_digest, &digests.input),
    ] {
        if saved != now {
            return Err(bad(format!("{what} changed since the checkpoint was written")));
        }
    }
    let stage_path = dir.join(format!("{}.json", header.stage));
    let data = std::fs::read(&stage_path).map_err(io_err(&stage_path))?;
    if sha256_hex(&data) != header.stage_digest {
        return Err(bad(format!("{} does not match its digest", stage_path.display())));
    }
    let saved: Vec<QuestionState> =
        serde_json::from_slice(&data).map_err(|e| bad(format!("unreadable stage data: {e}")))?;
    let expected: Vec<&str> = states.iter().map(|s| s.qid.as_str()).collect();
    let got: Vec<&str> = saved.iter().map(|s| s.qid.as_str()).collect();
    if expected != got || header.completed_qids != got {
        return Err(bad("question set differs from the input".to_string()));
    }
    for (state, saved) in states.iter_mut().zip(saved) {
        state.entry = saved.entry;
        state.retrieved = saved.retrieved;
        state.pooled = saved.pooled;
        state.selected = saved.selected;
        state.labeled = saved.labeled;
    }
    Ok(Some(header.stage))
}

/// Run the whole pipeline. See the module docs for the stages and files.
pub fn run_pipeline(config: &PipelineConfig, options: RunOptions) -> Result<RunReport, PipelineError> {
    let config = validate_config(config).map_err(PipelineError::Config)?;
    let store = DocStore::open(&config.corpus_store)?;
    let index = InvertedIndex::open_for(&store)?;
    let pairs = load_reference_pairs(&config.input_pairs)?;
    let fingerprint = config.fingerprint();
    let digests = Digests {
        config: fingerprint.digest(),
        corpus: store.digest().map_err(io_err(&config.corpus_store))?,
        index: file_sha256_hex(&config.corpus_store.join(INDEX_FILE))
            .map_err(io_err(&config.corpus_store))?,
        input: file_sha256_hex(&config.input_pairs).map_err(io_err(&config.input_pairs))?,
    };
    let ctx = Context {
        config: &config,
        store: &store,
        index: &index,
        segmenter: Segmenter::new(config.max_sentence_chars),
        pool: rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?,
    };

    let mut states = group_questions(pairs);
    let ckpt_dir = config.checkpoint_dir();
    let mut done = None;
    if options.resume {
        done = read_checkpoint(&ckpt_dir, &mut states, &digests)?;
        match done {
            Some(stage) => info!(%stage, "resuming from checkpoint"),
            None => info!("no checkpoint found, starting from scratch"),
        }
    }
    info!(questions = states.len(), "pipeline start");

    for stage in Stage::ALL {
        if done.is_some_and(|d| stage <= d) {
            continue;
        }
        match stage {
            Stage::Retrieved => ctx.retrieve(&mut states),
            Stage::Pooled => ctx.pool(&mut states)?,
            Stage::Reranked => ctx.rerank_select(&mut states)?,
            Stage::Labeled => ctx.label(&mut states),
        }
        info!(%stage, "stage finished");
        write_checkpoint(&ckpt_dir, stage, &states, &digests)?;
        if options.stop_after == Some(stage) {
            return Ok(partial_report(&config, &fingerprint, &digests, &states, stage));
        }
    }

    let labeled: Vec<LabeledPair> = states.iter().flat_map(|s| s.labeled.iter().cloned()).collect();
    let mut bytes = Vec::new();
    write_labeled_pairs(&labeled, &mut bytes, config.output_format)
        .map_err(io_err(&config.output))?;
    write_atomic(&config.output, &bytes).map_err(io_err(&config.output))?;

    let manifest = build_manifest(&fingerprint, &digests, sha256_hex(&bytes), &states, &labeled);
    let manifest_path = config.manifest_path();
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    write_atomic(&manifest_path, &manifest_bytes).map_err(io_err(&manifest_path))?;

    if !config.keep_checkpoints {
        let _ = std::fs::remove_dir_all(&ckpt_dir);
    }
    info!(
        labeled = manifest.counts.labeled,
        positive = manifest.counts.positive,
        failed = manifest.counts.failed,
        "pipeline finished"
    );
    Ok(RunReport {
        output: config.output.clone(),
        manifest_path,
        manifest,
        labeled,
        stopped_after: None,
    })
}

fn build_manifest(
    fingerprint: &ConfigFingerprint,
    digests: &Digests,
    output_digest: String,
    states: &[QuestionState],
    labeled: &[LabeledPair],
) -> Manifest {
    let questions: Vec<QuestionEntry> = states.iter().map(|s| s.entry.clone()).collect();
    let mut counts = StageCounts {
        questions: questions.len(),
        ..StageCounts::default()
    };
    for q in &questions {
        counts.retrieved += q.retrieved;
        counts.pooled += q.pooled;
        counts.selected += q.selected;
        counts.labeled += q.labeled;
        counts.positive += q.positive;
        match q.status {
            QuestionStatus::Ok => {}
            QuestionStatus::NoRetrieval => counts.no_retrieval += 1,
            QuestionStatus::Failed => counts.failed += 1,
        }
    }
    Manifest {
        version: MANIFEST_VERSION,
        config: fingerprint.clone(),
        config_digest: digests.config.clone(),
        corpus_digest: digests.corpus.clone(),
        index_digest: digests.index.clone(),
        input_digest: digests.input.clone(),
        output_digest,
        counts,
        stats: labeled_stats(labeled),
        questions,
    }
}

fn partial_report(
    config: &PipelineConfig,
    fingerprint: &ConfigFingerprint,
    digests: &Digests,
    states: &[QuestionState],
    stage: Stage,
) -> RunReport {
    let labeled: Vec<LabeledPair> = states.iter().flat_map(|s| s.labeled.iter().cloned()).collect();
    RunReport {
        output: config.output.clone(),
        manifest_path: config.manifest_path(),
        manifest: build_manifest(fingerprint, digests, String::new(), states, &labeled),
        labeled,
        stopped_after: Some(stage),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_corpus, CorpusFormat};
    use crate::datasets::write_reference_pairs;
    use crate::evaluator::ReferencePair;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.k1, c.k2), (1000, 25));
        assert_eq!(c.threshold, 0.9);
        assert_eq!(c.reranker.kind, RerankerKind::Lexical);
        assert_eq!(c.evaluator.kind, EvaluatorKind::Proxy);
        assert!(validate_config(&c).is_ok());
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let c = PipelineConfig::from_toml_str("", Path::new("/cfg")).unwrap();
        let d = PipelineConfig::default();
        assert_eq!((c.k1, c.k2, c.threshold), (d.k1, d.k2, d.threshold));
        assert_eq!(c.output, Path::new("/cfg/rws.tsv"));
        assert!(validate_config(&c).is_ok());
    }

    #[test]
    fn file_values_and_errors() {
        let text = "k1 = 50\nk2 = 5\nthreshold = 0.5\noutput = \"/abs/out.jsonl\"\n\
                    output_format = \"jsonl\"\n[evaluator]\nalpha = 0.5\n";
        let c = PipelineConfig::from_toml_str(text, Path::new("/cfg")).unwrap();
        assert_eq!((c.k1, c.k2), (50, 5));
        assert_eq!(c.evaluator.threshold, 0.5);
        assert_eq!(c.evaluator.alpha, 0.5);
        assert_eq!(c.output, Path::new("/abs/out.jsonl"));
        assert_eq!(c.output_format, OutputFormat::Jsonl);
        assert!(PipelineConfig::from_toml_str("k3 = 1", Path::new(".")).is_err());
        assert!(PipelineConfig::from_toml_str("[evaluator]\nthreshold = 0.5", Path::new(".")).is_err());
    }

    #[test]
    fn all_violations_reported() {
        let c = PipelineConfig {
            k1: 25,
            k2: 50,
            threshold: 1.5,
            parallelism: 0,
            ..PipelineConfig::default()
        };
        let errors = validate_config(&c).unwrap_err();
        assert!(errors.iter().any(|e| e.contains("k2 exceeds k1")), "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("threshold")), "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("parallelism")), "{errors:?}");

        let nan = PipelineConfig {
            threshold: f64::NAN,
            ..PipelineConfig::default()
        };
        assert!(validate_config(&nan).is_err());

        let ext = PipelineConfig {
            evaluator: EvaluatorSpec {
                kind: EvaluatorKind::External,
                ..EvaluatorSpec::default()
            },
            ..PipelineConfig::default()
        };
        assert!(validate_config(&ext).unwrap_err()[0].contains("endpoint"));
    }

    #[test]
    fn manifest_and_checkpoint_paths() {
        let c = PipelineConfig {
            output: PathBuf::from("/x/rws.tsv"),
            ..PipelineConfig::default()
        };
        assert_eq!(c.manifest_path(), Path::new("/x/rws.tsv.manifest.json"));
        assert_eq!(c.checkpoint_dir(), Path::new("/x/rws.tsv.ckpt"));
    }

    #[test]
    fn fingerprint_ignores_paths_and_parallelism() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            parallelism: 8,
            output: PathBuf::from("elsewhere.tsv"),
            ..PipelineConfig::default()
        };
        assert_eq!(a.fingerprint().digest(), b.fingerprint().digest());
        let c = PipelineConfig {
            k2: 5,
            ..PipelineConfig::default()
        };
        assert_ne!(a.fingerprint().digest(), c.fingerprint().digest());
    }

    fn setup(dir: &Path, docs: &[&str], pairs: &[(&str, &str, &str)]) -> PipelineConfig {
        let corpus = dir.join("corpus.jsonl");
        let lines: Vec<String> = docs
            .iter()
            .map(|d| serde_json::json!({ "text": d }).to_string())
            .collect();
        std::fs::write(&corpus, lines.join("\n")).unwrap();
        let store_dir = dir.join("store");
        let (store, _) = ingest_corpus(&corpus, CorpusFormat::Jsonl, &store_dir).unwrap();
        InvertedIndex::build_and_save(&store).unwrap();
        let pairs: Vec<ReferencePair> = pairs
            .iter()
            .map(|(q, question, r)| ReferencePair {
                qid: q.to_string(),
                question: question.to_string(),
                reference: r.to_string(),
            })
            .collect();
        write_reference_pairs(&pairs, &dir.join("pairs.tsv")).unwrap();
        PipelineConfig {
            corpus_store: store_dir,
            input_pairs: dir.join("pairs.tsv"),
            output: dir.join("out.tsv"),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn small_run() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(
            dir.path(),
            &[
                "Paris is the capital of France. It is large.",
                "Berlin is the capital of Germany. Beer is popular.",
                "Nothing relevant here.",
            ],
            &[
                ("q2", "what is the capital of germany?", "Berlin is the capital of Germany."),
                ("q1", "what is the capital of france?", "Paris is the capital of France."),
                ("q1", "what is the capital of france?", "The capital of France is Paris."),
                ("q3", "zebra xylophone", "none"),
            ],
        );
        let report = run_pipeline(&config, RunOptions::default()).unwrap();
        let qs = &report.manifest.questions;
        assert_eq!(
            qs.iter().map(|q| q.qid.as_str()).collect::<Vec<_>>(),
            vec!["q1", "q2", "q3"]
        );
        assert_eq!(qs[0].references, 2);
        assert_eq!(qs[2].status, QuestionStatus::NoRetrieval);
        assert_eq!(qs[2].note.as_deref(), Some("no retrieval"));
        assert_eq!(qs[2].labeled, 0);
        let first = &report.labeled[0];
        assert_eq!(first.qid, "q1");
        assert_eq!(first.answer, "Paris is the capital of France.");
        assert!(first.label);
        assert!(report.output.exists());
        assert!(report.manifest_path.exists());
        assert!(!config.checkpoint_dir().exists());
        assert!(!report.exceeds_failure_budget());
    }

    #[test]
    fn missing_index_is_a_startup_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path(), &["a b c."], &[("q", "a", "b")]);
        std::fs::remove_file(config.corpus_store.join(INDEX_FILE)).unwrap();
        assert!(matches!(
            run_pipeline(&config, RunOptions::default()),
            Err(PipelineError::Index(IndexError::Missing(_)))
        ));
    }

    #[test]
    fn checkpoint_rejects_changed_config() {
        let dir = tempfile::tempdir().unwrap();
        let config = setup(dir.path(), &["alpha beta. gamma delta."], &[("q", "alpha", "beta")]);
        let opts = RunOptions {
            resume: false,
            stop_after: Some(Stage::Pooled),
        };
        run_pipeline(&config, opts).unwrap();
        let changed = PipelineConfig {
            k2: 3,
            ..config.clone()
        };
        let resume = RunOptions {
            resume: true,
            stop_after: None,
        };
        assert!(matches!(
            run_pipeline(&changed, resume),
            Err(PipelineError::Checkpoint { .. })
        ));
        // Parallelism is not part of the checkpoint identity.
        let wider = PipelineConfig {
            parallelism: 3,
            ..config
        };
        assert!(run_pipeline(&wider, resume).is_ok());
    }
}
