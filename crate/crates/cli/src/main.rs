mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fccov_core::datagen::{Model, Scenario};
use fccov_core::metrics::Metric;

/// Nonlinear sufficient dimension reduction with Frechet cumulative
/// covariance.
#[derive(Debug, Parser)]
#[command(name = "fccov-net", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FCCOV_THREADS")]
    threads: Option<usize>,

    /// Print every configuration default as TOML and exit.
    #[arg(long)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
struct ResponseArgs {
    /// Response file (headerless CSV or one of the headed formats).
    #[arg(long)]
    responses: PathBuf,
    /// Overrides the metric implied by the response file.
    #[arg(long)]
    metric: Option<Metric>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the FCCov between a score column and response objects.
    Fccov {
        /// Headerless CSV of scores; one column unless --column is given.
        #[arg(long)]
        scores: PathBuf,
        /// Zero-based score column.
        #[arg(long, default_value_t = 0)]
        column: usize,
        /// Precomputed n x n distance matrix (headerless CSV).
        #[arg(long, conflicts_with_all = ["responses", "metric"])]
        distances: Option<PathBuf>,
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        metric: Option<Metric>,
        /// Use the sorting-based estimator (the default).
        #[arg(long)]
        fast: bool,
        /// Use the literal O(n^4) enumeration.
        #[arg(long)]
        naive: bool,
        /// Run a permutation test with this many permutations.
        #[arg(long)]
        permutations: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train networks and write a checkpoint plus a training report.
    Train {
        #[arg(long)]
        predictors: PathBuf,
        #[command(flatten)]
        responses: ResponseArgs,
        /// TOML config; only its [train] and [dimension] sections are read.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Estimate the structural dimension first and train with it.
        #[arg(long)]
        estimate_dimension: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a checkpoint to new predictors and score the result.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        predictors: PathBuf,
        /// Responses for per-component FCCov estimates.
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long, requires = "responses")]
        metric: Option<Metric>,
        /// True sufficient predictors for distance correlation and kappa.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Config whose [train] architecture the checkpoint must match.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the replicates of an experiment spec.
    Benchmark {
        spec: PathBuf,
        /// Overrides the spec's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a simulated training set and its clean test set.
    Simulate {
        #[arg(long)]
        model: Model,
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long, requires = "outlier_rate")]
        outlier_case: Option<u8>,
        #[arg(long, requires = "outlier_case")]
        outlier_rate: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(commands::EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(commands::EXIT_USAGE);
        }
    }
    let result = if cli.print_config {
        config::print_defaults()
    } else {
        match cli.command {
            Some(cmd) => commands::run(cmd),
            None => Err(commands::CliError::Usage("no command given; see --help".into())),
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
