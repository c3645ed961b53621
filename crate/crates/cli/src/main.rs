//! `compresscheck` command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod analysis;
mod codec;
mod common;
mod dataset;
mod sweep;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use common::CliError;

#[derive(Parser, Debug)]
#[command(name = "compresscheck", version, about = "Measure and mitigate JPEG damage to small vision models")]
struct Cli {
    /// Cap on worker threads used for data-parallel work.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode, decode and compare images.
    #[command(subcommand)]
    Codec(codec::CodecCommand),
    /// Generate the synthetic shapes dataset as an image folder.
    Dataset(dataset::DatasetArgs),
    /// Train a task model, a corrector, or fine-tune either.
    Train(train::TrainArgs),
    /// Evaluate a model over a JPEG quality sweep.
    Sweep(sweep::SweepArgs),
    /// Merge and check sweep reports, emit CSV or plot data.
    Report(sweep::ReportArgs),
    /// Grad-CAM heatmap for one image.
    Gradcam(analysis::GradcamArgs),
    /// Batch-1 inference and training throughput.
    Throughput(analysis::ThroughputArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        compresscheck::par::init_workers(n);
    }
    match cli.command {
        Command::Codec(c) => codec::run(c),
        Command::Dataset(a) => dataset::run(a),
        Command::Train(a) => train::run(a),
        Command::Sweep(a) => sweep::run_sweep(a),
        Command::Report(a) => sweep::run_report(a),
        Command::Gradcam(a) => analysis::run_gradcam(a),
        Command::Throughput(a) => analysis::run_throughput(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    // clap exits with status 2 on malformed command lines
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
