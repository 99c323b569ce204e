use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relation_discovery::objectives::Objective;
use relation_discovery::pipeline::{
    cmd_eval, cmd_export, cmd_gen, cmd_retrieve, cmd_train, Overrides, PipelineError, RunConfig,
};
use relation_discovery::scene::DistractorPolicy;
use serde::Serialize;

/// Generate relational scene datasets, train the relation encoder, and
/// discover relation types and shared task graphs.
#[derive(Parser)]
#[command(name = "reldisc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Write train.jsonl and validation.jsonl into the output directory.
    Gen,
    /// Train on train.jsonl; writes checkpoint.bin, train_log.csv, train_summary.json.
    Train,
    /// Cluster relation embeddings and score them; writes eval.json.
    Eval,
    /// Per-task maximum-common-subgraph retrieval; writes retrieval.json.
    Retrieve,
    /// Dump relation embeddings; writes embeddings.csv.
    Export,
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `core-2-3`, `core-2-4`, or a task-family JSON file.
    #[arg(long, global = true)]
    tasks: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    objective: Option<Objective>,
    /// Enable the information-bottleneck term.
    #[arg(long, global = true)]
    ib: bool,
    /// `0`, `1` or `0-2`.
    #[arg(long, global = true)]
    distractors: Option<DistractorPolicy>,
    #[arg(long, global = true)]
    examples_per_task: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    group_size: Option<usize>,
    #[arg(long, global = true)]
    top: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Dataset for eval / retrieve / export (default: the validation set).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn print(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let f = cli.flags;
    let mut config = match &f.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(Overrides {
        tasks: f.tasks,
        seed: f.seed,
        objective: f.objective,
        ib: f.ib,
        distractors: f.distractors,
        examples_per_task: f.examples_per_task,
        epochs: f.epochs,
        k: f.k,
        group_size: f.group_size,
        top: f.top,
        out: f.out,
        checkpoint: f.checkpoint,
        dataset: f.dataset,
        threads: f.threads,
    });
    match cli.command {
        Command::Gen => print(&cmd_gen(&config)?),
        Command::Train => print(&cmd_train(&config, |line| eprintln!("{line}"))?),
        Command::Eval => print(&cmd_eval(&config)?),
        Command::Retrieve => print(&cmd_retrieve(&config)?),
        Command::Export => println!("{}", cmd_export(&config)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                PipelineError::Config(_) => 2,
                PipelineError::Data(_) | PipelineError::Scene(_) | PipelineError::Io(_) => 3,
                PipelineError::NumericFailure { .. } => 4,
                _ => 1,
            })
        }
    }
}
