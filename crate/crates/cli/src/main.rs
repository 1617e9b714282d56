use std::path::PathBuf;
use std::process::ExitCode;

use avmc_core::eval::LabelSource;
use avmc_core::{Error, ModalityKind, Split};
use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

#[derive(Parser, Debug)]
#[command(name = "avmc", version, about = "Semi-supervised multimodal sentiment regression with acoustic/visual mixup consistency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write checkpoint, history and validation report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of an archive.
    Eval(EvalArgs),
    /// Write per-instance predictions as CSV (`id,prediction,label`).
    Predict(PredictArgs),
    /// Generate a synthetic feature archive.
    Synth(SynthArgs),
    /// Turn rows of seven annotator scores into sentiment labels.
    Aggregate(AggregateArgs),
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Use the two-phase semi-supervised epoch instead of supervised training.
    #[arg(long)]
    semi: bool,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Ablation mode.
    #[arg(long, value_enum)]
    ablate: Option<AblationArg>,
    /// Dotted config override, e.g. `--set train.batch_size=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AblationArg {
    /// β_a = 0
    MixupA,
    /// β_v = 0
    MixupV,
    /// β_a = β_v = 0
    MixupAv,
    /// β_a = β_v = 0 and α_t = α_a = α_v = 0
    MixupAvUnimodal,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    archive: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Comma-separated tasks out of m,t,a,v.
    #[arg(long, default_value = "m", value_delimiter = ',', value_parser = parse_task)]
    tasks: Vec<ModalityKind>,
    #[arg(long, default_value = "multimodal", value_parser = parse_source)]
    label_source: LabelSource,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    archive: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    #[arg(long, default_value = "m", value_parser = parse_task)]
    task: ModalityKind,
    /// Which annotation fills the `label` column.
    #[arg(long, default_value = "multimodal", value_parser = parse_source)]
    label_source: LabelSource,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Short sequences and narrow features; trains in seconds.
    Small,
    /// Feature shapes of the CH-SIMS v2.0 release.
    Canonical,
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300)]
    n_labeled: usize,
    #[arg(long, default_value_t = 0)]
    n_unlabeled: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Preset::Small)]
    preset: Preset,
}

#[derive(clap::Args, Debug)]
struct AggregateArgs {
    /// CSV with rows `id,s1,...,s7` (scores in -3..=3).
    input: PathBuf,
    /// CSV output with rows `id,label`.
    output: PathBuf,
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_task(s: &str) -> Result<ModalityKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_source(s: &str) -> Result<LabelSource, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// 1 for usage and configuration problems, 2 for data and validation problems.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Predict(args) => commands::predict(args),
        Command::Synth(args) => commands::synth(args),
        Command::Aggregate(args) => commands::aggregate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
