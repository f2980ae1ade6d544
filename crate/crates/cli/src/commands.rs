use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hushqa::corpus::{build_secret_store, designate_secrets, load_secret_ids, load_squad, to_squad_json};
use hushqa::harness::{
    render_table, run_experiment, run_grid, write_results, BackendSpec, CellFailure, CellOutput, Design, ExperimentConfig,
    ExperimentError, GridSpec, SummaryRow, WriteOptions,
};
use hushqa::backends::build_idf;
use hushqa::backends::HashedTfIdfEmbedder;
use hushqa::synth::{synthetic_corpus, SynthConfig};
use hushqa::{build_redacted_corpus, Corpus};
use serde::Serialize;
use thiserror::Error;

use crate::gateway::{self, GatewayConfig};

#[derive(Debug, Parser)]
#[command(name = "hushqa", version, about = "Secret keeping for extractive question answering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a SQuAD v1.1 file, printing corpus statistics.
    Ingest {
        squad: PathBuf,
    },
    /// Write a synthetic SQuAD-format corpus.
    Synth {
        #[arg(long, default_value_t = 64)]
        passages: usize,
        #[arg(long, default_value_t = 5)]
        facts: usize,
        #[arg(long, default_value_t = 0.2)]
        shared_value_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove secret-matching sentences and write the redacted corpus.
    Redact(RedactArgs),
    /// Run one experiment.
    Eval(EvalArgs),
    /// Run every cell of a grid file.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        /// Overrides the grid's `corpus` field.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Record wall-clock columns (makes the summary non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Run the sanitizing HTTP gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RedactArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub secrets: usize,
    /// JSON list of secret passage ids, instead of `--secrets`/`--seed`.
    #[arg(long)]
    pub secret_ids: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = hushqa::redactor::DEFAULT_REDACT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    pub context_ratio: f64,
    #[arg(long, default_value_t = hushqa::backends::DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value = "redacted")]
    pub out: PathBuf,
}

/// Flags override the config file, which overrides the defaults.
#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// ExperimentConfig JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub design: Option<Design>,
    #[arg(long)]
    pub secrets: Option<usize>,
    #[arg(long)]
    pub context_ratio: Option<f64>,
    #[arg(long)]
    pub secret_ratio: Option<f64>,
    #[arg(long)]
    pub questions: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub redact_threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub answerer: Option<BackendSpec>,
    #[arg(long)]
    pub embedder: Option<BackendSpec>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

/// Failure classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Backend(String),
    #[error("{failed} of {total} grid cells failed")]
    PartialGrid { failed: usize, total: usize },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::PartialGrid { .. } => 4,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Other(format!("{}: {e}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Corpus problems are input errors.
fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    load_squad(path).map_err(|e| CliError::Config(e.to_string()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { squad } => ingest(&squad),
        Command::Synth { passages, facts, shared_value_rate, seed, out } => {
            let corpus = synthetic_corpus(&SynthConfig {
                passages,
                facts_per_passage: facts,
                shared_value_rate,
                seed,
            });
            write_json(&out, &to_squad_json(&corpus))?;
            println!("wrote {} passages, {} questions to {}", corpus.passages().len(), corpus.questions().len(), out.display());
            Ok(())
        }
        Command::Redact(args) => redact(&args),
        Command::Eval(args) => eval(&args),
        Command::Sweep { grid, corpus, out, timing } => sweep(&grid, corpus, &out, timing),
        Command::Serve { config } => serve(&config),
    }
}

fn ingest(path: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(path)?;
    let stale = corpus
        .questions()
        .iter()
        .flat_map(|q| &q.gold_answers)
        .filter(|g| g.offset.is_none())
        .count();
    let stats = serde_json::json!({
        "passages": corpus.passages().len(),
        "questions": corpus.questions().len(),
        "sentences": corpus.sentence_count(),
        "gold_answers": corpus.questions().iter().map(|q| q.gold_answers.len()).sum::<usize>(),
        "stale_offsets": stale,
        "redacted": corpus.is_redacted(),
    });
    println!("{}", serde_json::to_string_pretty(&stats).expect("json"));
    Ok(())
}

fn redact(args: &RedactArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    let ids = match &args.secret_ids {
        Some(p) => load_secret_ids(p, &corpus),
        None => designate_secrets(&corpus, args.secrets, args.seed),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    let store = build_secret_store(&corpus, &ids, args.context_ratio).map_err(|e| CliError::Config(e.to_string()))?;
    if args.dim < 2 {
        return Err(CliError::Config(format!("dim {} below 2", args.dim)));
    }
    let idf = build_idf(&corpus).map_err(|e| CliError::Other(e.to_string()))?;
    let embedder = HashedTfIdfEmbedder::new(std::sync::Arc::new(idf), args.dim);
    let (redacted, report) = build_redacted_corpus(&corpus, &store, &embedder, args.threshold).map_err(|e| match e {
        hushqa::redactor::RedactError::Threshold(_) => CliError::Config(e.to_string()),
        other => CliError::Other(other.to_string()),
    })?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    write_json(&args.out.join("redacted.json"), &to_squad_json(&redacted))?;
    write_json(&args.out.join("redaction_report.json"), &report)?;
    write_json(&args.out.join("secret_ids.json"), &ids)?;
    println!(
        "removed {} of {} sentences from {} passages ({} comparisons); wrote {}",
        report.sentences_removed,
        report.sentences_total,
        report.removed_per_passage.len(),
        report.comparisons_made,
        args.out.display()
    );
    Ok(())
}

fn eval_config(args: &EvalArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = &args.$flag { cfg.$field = v.clone(); }
        )*};
    }
    apply!(design => design, secrets => num_secrets, context_ratio => context_ratio,
        secret_ratio => secret_question_ratio, questions => n_questions, threshold => threshold,
        redact_threshold => redact_threshold, seed => seed, answerer => answerer, embedder => embedder, dim => dim);
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let cfg = eval_config(args)?;
    let corpus = load_corpus(&args.corpus)?;
    let opts = WriteOptions::default();
    match run_experiment(&corpus, &cfg) {
        Ok(output) => {
            let cell = CellOutput { cell: 0, output };
            write_results(std::slice::from_ref(&cell), &[], &args.out, &opts).map_err(io_err(&args.out))?;
            print!("{}", render_table(&[SummaryRow::new(&cell, true)]));
            Ok(())
        }
        Err(e) => {
            if let ExperimentError::Backend { .. } = &e {
                flush_partial(&args.out, &e)?;
            }
            Err(experiment_error(e))
        }
    }
}

fn experiment_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Config(_) | ExperimentError::Corpus(_) => CliError::Config(e.to_string()),
        e if e.is_backend() => CliError::Backend(e.to_string()),
        ExperimentError::Setup(_) => CliError::Backend(e.to_string()),
        e => CliError::Other(e.to_string()),
    }
}

/// Per-question records gathered before a backend failure.
fn flush_partial(out: &Path, e: &ExperimentError) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("partial_records.jsonl");
    let mut text = String::new();
    for r in e.partial_records() {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    fs::write(&path, text).map_err(io_err(&path))?;
    eprintln!("wrote {} partial records to {}", e.partial_records().len(), path.display());
    Ok(())
}

fn sweep(grid_path: &Path, corpus: Option<PathBuf>, out: &Path, timing: bool) -> Result<(), CliError> {
    let grid: GridSpec = read_json(grid_path)?;
    grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let corpus_path = corpus
        .or_else(|| {
            // A relative corpus path in the grid is resolved against the grid file.
            grid.corpus.as_ref().map(|p| grid_path.parent().unwrap_or(Path::new(".")).join(p))
        })
        .ok_or_else(|| CliError::Config("no corpus: pass --corpus or set \"corpus\" in the grid".into()))?;
    let corpus = load_corpus(&corpus_path)?;
    let outcome = run_grid(&corpus, &grid);
    let opts = WriteOptions {
        include_timing: timing || grid.record_timing,
        ..WriteOptions::default()
    };
    write_results(&outcome.completed, &outcome.failures, out, &opts).map_err(io_err(out))?;
    let rows: Vec<SummaryRow> = outcome.completed.iter().map(|c| SummaryRow::new(c, opts.include_timing)).collect();
    print!("{}", render_table(&rows));
    report_failures(&outcome.failures, grid.len())
}

fn report_failures(failures: &[CellFailure], total: usize) -> Result<(), CliError> {
    for f in failures {
        eprintln!("cell {} failed: {}", f.cell, f.error);
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::PartialGrid { failed: failures.len(), total })
    }
}

fn serve(path: &Path) -> Result<(), CliError> {
    let config: GatewayConfig = read_json(path)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(e.to_string()))?;
    runtime.block_on(gateway::serve(config)).map_err(|e| match e {
        gateway::GatewayError::Config(_) | gateway::GatewayError::Corpus(_) => CliError::Config(e.to_string()),
        gateway::GatewayError::Backend(_) => CliError::Backend(e.to_string()),
        other => CliError::Other(other.to_string()),
    })
}
