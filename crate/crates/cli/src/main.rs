//! `rws`: build a corpus index, run the weak supervision pipeline, and
//! inspect or grade AS2 datasets.
//!
//! Logging goes to stderr and is controlled by `RWS_LOG` (default `info`).

use std::fs::File;
use std::io::{BufReader, IsTerminal};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rws_core::candidates::RerankerKind;
use rws_core::corpus::{ingest_corpus, CorpusFormat, DocStore};
use rws_core::datasets::{
    load_as2_tsv, reference_pairs_from_dataset, triples_to_dataset, wikiqa_to_dataset,
    write_reference_pairs, As2Dataset, FilterMode, OutputFormat, QuestionClass,
};
use rws_core::evaluator::EvaluatorKind;
use rws_core::fixture::{planted_fixture, FixtureParams};
use rws_core::index::InvertedIndex;
use rws_core::metrics::grade;
use rws_core::pipeline::{run_pipeline, validate_config, PipelineConfig, RunOptions, Stage};

#[derive(Parser, Debug)]
#[command(name = "rws", version, about = "Reference-based weak supervision for answer sentence selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest raw documents into a document store
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Build or query the BM25 index of a store
    #[command(subcommand)]
    Index(IndexCmd),
    /// Inspect, filter and convert AS2 datasets
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Grade ranked answers
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Run the labeling pipeline
    Run(RunArgs),
    /// Generate synthetic inputs
    #[command(subcommand)]
    Fixture(FixtureCmd),
}

#[derive(Subcommand, Debug)]
enum CorpusCmd {
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = CorpusFormatArg::Jsonl)]
        format: CorpusFormatArg,
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CorpusFormatArg {
    Jsonl,
    PlainDir,
}

#[derive(Subcommand, Debug)]
enum IndexCmd {
    Build {
        #[arg(long)]
        store: PathBuf,
    },
    /// Print the top documents for a question as `doc_id score source`
    Query {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 10)]
        k1: usize,
        #[arg(long)]
        question: String,
    },
}

#[derive(Subcommand, Debug)]
enum DatasetCmd {
    /// Question/answer counts per filter mode and question class
    Stats { input: PathBuf },
    Filter {
        #[arg(long, value_enum)]
        mode: FilterArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Convert a native dataset to the interchange TSV, or to reference pairs
    Convert {
        #[arg(long, value_enum)]
        from: SourceArg,
        #[arg(long, value_enum, default_value_t = TargetArg::As2)]
        to: TargetArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FilterArg {
    Origin,
    WithoutAllMinus,
    Clean,
}

impl From<FilterArg> for FilterMode {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Origin => FilterMode::Origin,
            FilterArg::WithoutAllMinus => FilterMode::WithoutAllMinus,
            FilterArg::Clean => FilterMode::CleanOnly,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SourceArg {
    /// WikiQA release TSV (with header)
    Wikiqa,
    /// `question answer label` triples
    Triples,
    /// The interchange TSV itself
    As2,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TargetArg {
    As2,
    /// `qid question reference` pairs from the positive rows
    Pairs,
}

#[derive(Subcommand, Debug)]
enum MetricsCmd {
    /// Print P@1, MAP and MRR as JSON
    Grade {
        /// Interchange TSV with gold labels
        #[arg(long)]
        gold: PathBuf,
        /// `qid answer score` TSV
        #[arg(long)]
        scores: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML config; relative paths inside it resolve against its directory
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    reranker: Option<RerankerArg>,
    #[arg(long, value_enum)]
    evaluator: Option<EvaluatorArg>,
    /// Endpoint for every component set to `external`
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    reranker_endpoint: Option<String>,
    #[arg(long)]
    evaluator_endpoint: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    output_format: Option<OutputFormatArg>,
    /// Continue from the checkpoint of an interrupted run
    #[arg(long)]
    resume: bool,
    /// Stop after this stage, leaving a checkpoint behind
    #[arg(long, value_parser = parse_stage)]
    stop_after: Option<Stage>,
    #[arg(long)]
    keep_checkpoints: bool,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RerankerArg {
    Lexical,
    External,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EvaluatorArg {
    Proxy,
    External,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OutputFormatArg {
    Tsv,
    Jsonl,
}

#[derive(Subcommand, Debug)]
enum FixtureCmd {
    /// Corpus, reference pairs and planted-sentence lists for a smoke run
    Planted {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        questions: usize,
        #[arg(long, default_value_t = 1000)]
        documents: usize,
        #[arg(long, default_value_t = 10)]
        distractors: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("RWS_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_ansi(std::io::stderr().is_terminal())
        .with_writer(std::io::stderr)
        .init();

    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Corpus(CorpusCmd::Ingest {
            input,
            format,
            store,
        }) => {
            let format = match format {
                CorpusFormatArg::Jsonl => CorpusFormat::Jsonl,
                CorpusFormatArg::PlainDir => CorpusFormat::PlainDir,
            };
            let (docs, report) = ingest_corpus(&input, format, &store)?;
            println!(
                "ingested {} documents ({} skipped as empty) into {}; sha256 {}",
                report.documents,
                report.skipped,
                store.display(),
                docs.digest()?
            );
        }
        Command::Index(IndexCmd::Build { store }) => {
            let docs = DocStore::open(&store)?;
            let index = InvertedIndex::build_and_save(&docs)?;
            println!(
                "indexed {} documents, {} terms, average length {:.1}",
                index.stats().doc_count,
                index.terms().count(),
                index.stats().avg_doc_len
            );
        }
        Command::Index(IndexCmd::Query { store, k1, question }) => {
            let docs = DocStore::open(&store)?;
            let index = InvertedIndex::open_for(&docs)?;
            for hit in index.retrieve_topk(&question, k1) {
                let source = docs.get(hit.doc_id).map_or("", |d| d.source_id.as_str());
                println!("{}\t{:.6}\t{}", hit.doc_id, hit.score, source);
            }
        }
        Command::Dataset(cmd) => dataset(cmd)?,
        Command::Metrics(MetricsCmd::Grade { gold, scores }) => {
            let report = grade(&gold, &scores)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Run(args) => run(args)?,
        Command::Fixture(FixtureCmd::Planted {
            out_dir,
            questions,
            documents,
            distractors,
            seed,
        }) => {
            if questions * (1 + distractors) > documents {
                bail!("{questions} questions with {distractors} distractors need more than {documents} documents");
            }
            let fixture = planted_fixture(FixtureParams {
                questions,
                documents,
                distractors_per_question: distractors,
                seed,
            });
            fixture.write_dir(&out_dir)?;
            println!(
                "wrote {} documents and {} reference pairs to {}",
                fixture.documents.len(),
                fixture.pairs.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn load_native(from: SourceArg, input: &Path) -> Result<As2Dataset> {
    let open = || -> Result<BufReader<File>> {
        Ok(BufReader::new(
            File::open(input).with_context(|| format!("cannot open {}", input.display()))?,
        ))
    };
    Ok(match from {
        SourceArg::Wikiqa => wikiqa_to_dataset(open()?, input)?,
        SourceArg::Triples => triples_to_dataset(open()?, input)?,
        SourceArg::As2 => load_as2_tsv(input)?,
    })
}

fn dataset(cmd: DatasetCmd) -> Result<()> {
    match cmd {
        DatasetCmd::Stats { input } => {
            let ds = load_as2_tsv(&input)?;
            println!("{:<18} {:>8} {:>10} {:>9} {:>10}", "split", "#Q", "#A", "#A+", "#A-");
            let row = |name: &str, ds: &As2Dataset| {
                let s = ds.stats();
                println!(
                    "{name:<18} {:>8} {:>10} {:>9} {:>10}",
                    s.num_q, s.num_a, s.num_pos, s.num_neg
                );
            };
            row("origin", &ds);
            row("without all-", &ds.filter(FilterMode::WithoutAllMinus));
            row("clean", &ds.filter(FilterMode::CleanOnly));
            for (name, class) in [
                ("class all+", QuestionClass::AllPlus),
                ("class all-", QuestionClass::AllMinus),
            ] {
                let only = As2Dataset {
                    groups: ds.groups.iter().filter(|g| g.class() == class).cloned().collect(),
                };
                row(name, &only);
            }
        }
        DatasetCmd::Filter {
            mode,
            input,
            output,
        } => {
            let ds = load_as2_tsv(&input)?.filter(mode.into());
            let n = ds.write_tsv(&output)?;
            println!("wrote {n} rows for {} questions to {}", ds.groups.len(), output.display());
        }
        DatasetCmd::Convert {
            from,
            to,
            input,
            output,
        } => {
            let ds = load_native(from, &input)?;
            let n = match to {
                TargetArg::As2 => ds.write_tsv(&output)?,
                TargetArg::Pairs => write_reference_pairs(&reference_pairs_from_dataset(&ds), &output)?,
            };
            println!("wrote {n} rows to {}", output.display());
        }
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.k1 {
        config.k1 = v;
    }
    if let Some(v) = args.k2 {
        config.k2 = v;
    }
    if let Some(v) = args.threshold {
        config.threshold = v;
    }
    if let Some(v) = args.alpha {
        config.evaluator.alpha = v;
    }
    if let Some(v) = args.parallelism {
        config.parallelism = v;
    }
    if let Some(v) = args.store {
        config.corpus_store = v;
    }
    if let Some(v) = args.pairs {
        config.input_pairs = v;
    }
    if let Some(v) = args.output {
        config.output = v;
    }
    if let Some(v) = args.output_format {
        config.output_format = match v {
            OutputFormatArg::Tsv => OutputFormat::Tsv,
            OutputFormatArg::Jsonl => OutputFormat::Jsonl,
        };
    }
    if let Some(r) = args.reranker {
        config.reranker.kind = match r {
            RerankerArg::Lexical => RerankerKind::Lexical,
            RerankerArg::External => RerankerKind::External,
        };
    }
    if let Some(e) = args.evaluator {
        config.evaluator.kind = match e {
            EvaluatorArg::Proxy => EvaluatorKind::Proxy,
            EvaluatorArg::External => EvaluatorKind::External,
        };
    }
    if let Some(url) = &args.endpoint {
        if config.reranker.kind == RerankerKind::External {
            config.reranker.endpoint = Some(url.clone());
        }
        if config.evaluator.kind == EvaluatorKind::External {
            config.evaluator.endpoint = Some(url.clone());
        }
    }
    if let Some(url) = args.reranker_endpoint {
        config.reranker.endpoint = Some(url);
    }
    if let Some(url) = args.evaluator_endpoint {
        config.evaluator.endpoint = Some(url);
    }
    // Switching a component back to the built-in scorer drops a stale endpoint.
    if config.reranker.kind == RerankerKind::Lexical && args.reranker.is_some() {
        config.reranker.endpoint = None;
    }
    if config.evaluator.kind == EvaluatorKind::Proxy && args.evaluator.is_some() {
        config.evaluator.endpoint = None;
    }
    config.keep_checkpoints |= args.keep_checkpoints;

    let config = validate_config(&config).map_err(rws_core::pipeline::PipelineError::Config)?;
    let report = run_pipeline(
        &config,
        RunOptions {
            resume: args.resume,
            stop_after: args.stop_after,
        },
    )?;
    let c = report.manifest.counts;
    if let Some(stage) = report.stopped_after {
        println!(
            "stopped after {stage}; resume with --resume (checkpoint in {})",
            config.checkpoint_dir().display()
        );
        return Ok(());
    }
    println!(
        "{} questions: {} labeled pairs ({} positive, {} negative), {} without retrieval, {} failed",
        c.questions,
        c.labeled,
        report.stats().num_pos,
        report.stats().num_neg,
        c.no_retrieval,
        c.failed
    );
    println!("output   {}", report.output.display());
    println!("manifest {}", report.manifest_path.display());
    if report.exceeds_failure_budget() {
        bail!(
            "{} of {} questions failed ({:.1}%), above the 10% budget; see the manifest",
            c.failed,
            c.questions,
            100.0 * report.failure_rate()
        );
    }
    Ok(())
}
