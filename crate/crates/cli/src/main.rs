mod commands;
mod config;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

/// Build referring-segmentation datasets and benchmarks, and score
/// grounding models against them.
#[derive(Parser, Debug)]
#[command(name = "groundforge", version, propagate_version = true)]
pub struct Cli {
    /// More log output on stderr (repeat for more)
    #[arg(short, long, global = true, action = ArgAction::Count, help_heading = "Global options")]
    verbose: u8,
    /// Only log errors
    #[arg(
        short,
        long,
        global = true,
        conflicts_with = "verbose",
        help_heading = "Global options"
    )]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set pipeline.concurrency=4
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Stub backend seed (same as gateway.stub.seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the annotation pipeline over an image manifest
    Annotate(commands::AnnotateArgs),
    /// Build, top up and finalize a benchmark manifest
    #[command(subcommand)]
    Curate(commands::CurateCommand),
    /// Serve the human review API over a benchmark manifest
    ReviewServe(commands::ReviewServeArgs),
    /// Score predictions against a benchmark
    Evaluate(commands::EvaluateArgs),
    /// Summarize a shard set
    Stats(commands::StatsArgs),
    /// Serve the deterministic stub backend over HTTP
    StubServe(commands::StubServeArgs),
    /// Write the box twin of a finalized benchmark
    BboxDerive(commands::BboxDeriveArgs),
}

/// How a command ended, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration: exit 2.
    Usage(String),
    /// Finished, but some items failed: exit 3.
    Partial(String),
    /// Could not finish: exit 4.
    Fatal(String),
}

impl Failure {
    pub fn fatal(e: impl std::fmt::Display) -> Self {
        Failure::Fatal(e.to_string())
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Partial(_) => 3,
            Failure::Fatal(_) => 4,
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => tracing::Level::ERROR,
        (_, 0) => tracing::Level::WARN,
        (_, 1) => tracing::Level::INFO,
        (_, 2) => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(4);
        }
    };
    let result = runtime.block_on(async {
        match cli.command {
            Command::Annotate(a) => commands::annotate(a).await,
            Command::Curate(c) => commands::curate(c).await,
            Command::ReviewServe(a) => commands::review_serve(a).await,
            Command::Evaluate(a) => commands::evaluate(a),
            Command::Stats(a) => commands::stats(a),
            Command::StubServe(a) => commands::stub_serve(a).await,
            Command::BboxDerive(a) => commands::bbox_derive(a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Partial(m) => eprintln!("partial failure: {m}"),
                Failure::Fatal(m) => eprintln!("fatal: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
