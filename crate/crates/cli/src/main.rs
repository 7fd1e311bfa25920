//! `anondq` command line: measure data quality under k-anonymization,
//! anonymize tables with the reference micro-aggregator, empirically justify
//! metric thresholds, and find minimal analysis sample sizes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use anondq::Error;

mod commands;
mod config;

use config::{env_jobs, RunConfig};

#[derive(Parser)]
#[command(name = "anondq", version, about = "Data quality measurement for k-anonymized tabular data")]
struct Cli {
    /// JSON run configuration (schema, g-trees, thresholds, ...)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every pseudo-random choice; outputs are byte-reproducible
    /// under a fixed seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: machine parallelism)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory for output files (default: current directory)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate data quality metrics for an (original, anonymized) pair.
    /// Exit code 0 when all thresholds pass, 1 when any fails.
    Metrics {
        /// Original table (delimited text, header row)
        #[arg(long)]
        original: PathBuf,
        /// Already-anonymized table aligned by row id
        #[arg(long, conflicts_with = "k")]
        anonymized: Option<PathBuf>,
        /// Anonymize on the fly with this k instead of --anonymized
        #[arg(long)]
        k: Option<usize>,
    },
    /// Anonymize a table with the reference micro-aggregation algorithm.
    Anonymize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the simulation pipeline that treats each metric as a classifier
    /// and recommends thresholds.
    Justify {
        /// Source table whose characteristics the synthetic datasets follow
        #[arg(long)]
        source: PathBuf,
        /// Metrics to evaluate/compare (comma separated; `ilm` is the
        /// 1-ILM baseline), default: all applicable
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
        /// Significance level for the labeling statistical tests
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Sensitivity analysis over sub-sample sizes in [n, 2n].
    Minimize {
        #[arg(long)]
        input: PathBuf,
        /// The analyst's statistically required minimum sample size
        #[arg(long)]
        n: Option<usize>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Schema(_) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> anondq::Result<u8> {
    let jobs = cli.jobs.or_else(env_jobs);
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let config = RunConfig::load(cli.config.as_deref(), cli.seed, cli.out_dir.as_deref())?;
    match cli.command {
        Command::Metrics { original, anonymized, k } => {
            commands::cmd_metrics(&config, &original, anonymized.as_deref(), k)
        }
        Command::Anonymize { input, k } => commands::cmd_anonymize(&config, &input, k),
        Command::Justify { source, metrics, alpha } => commands::cmd_justify(&config, &source, metrics, alpha),
        Command::Minimize { input, n } => commands::cmd_minimize(&config, &input, n),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
