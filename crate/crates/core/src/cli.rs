//! Command-line front end. Exit codes: 0 success, 1 usage or config error,
//! 2 internal failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchOptions, MetricsReport};
use crate::netsim::{self, SimConfig, SimError};

#[derive(Debug, Parser)]
#[command(
    name = "bferl",
    version,
    about = "Two-tier vehicle attestation ledger: simulator and benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a default scenario config.
    Init {
        #[arg(long, default_value = "scenario.cfg")]
        config: PathBuf,
    },
    /// Run a scenario and write its event log.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Event log path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write run metrics as JSON to this path.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Block creation time against fleet size.
    BenchCreate(BenchArgs),
    /// Challenge validation time against fleet size.
    BenchChallenge(BenchArgs),
    /// Merkle root time against ECU count.
    BenchMerkle(BenchArgs),
    /// Ledger size against block count, projected to 5.6M blocks.
    BenchStorage(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Comma-separated x values replacing the default series.
    #[arg(long, value_delimiter = ',')]
    pub points: Option<Vec<usize>>,
    /// Optional config; only its seed is used, and only when --seed is not
    /// given explicitly.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

enum Failure {
    Usage(String),
    Internal(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Usage(c.to_string()),
            other => Failure::Internal(other.to_string()),
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Internal(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Internal(e.to_string())),
    }
}

fn run_bench(
    args: &BenchArgs,
    explicit_seed: bool,
    f: fn(&[usize], BenchOptions) -> MetricsReport,
    defaults: &[usize],
) -> Result<(), Failure> {
    let mut seed = args.seed;
    if let (Some(path), false) = (&args.config, explicit_seed) {
        seed = SimConfig::load(path)
            .map_err(|e| Failure::Usage(e.to_string()))?
            .seed;
    }
    let points = args.points.clone().unwrap_or_else(|| defaults.to_vec());
    if points.is_empty() || points.contains(&0) {
        return Err(Failure::Usage("--points must be positive integers".into()));
    }
    let report = f(
        &points,
        BenchOptions {
            seed,
            threads: args.threads,
        },
    );
    let text = match args.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    write_output(args.out.as_deref(), &text)
}

fn execute(cli: Cli, explicit_seed: bool) -> Result<(), Failure> {
    match cli.command {
        Command::Init { config } => std::fs::write(&config, SimConfig::default().to_text())
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", config.display()))),
        Command::Run {
            config,
            out,
            metrics,
            seed,
        } => {
            let mut cfg = SimConfig::load(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (_, result) = netsim::simulate(cfg)?;
            write_output(out.as_deref(), &result.log.to_text())?;
            if let Some(path) = metrics {
                let mut json = serde_json::to_string_pretty(&result.metrics)
                    .map_err(|e| Failure::Internal(e.to_string()))?;
                json.push('\n');
                write_output(Some(&path), &json)?;
            }
            Ok(())
        }
        Command::BenchCreate(a) => run_bench(
            &a,
            explicit_seed,
            bench::bench_create,
            &bench::DEFAULT_VEHICLE_COUNTS,
        ),
        Command::BenchChallenge(a) => run_bench(
            &a,
            explicit_seed,
            bench::bench_challenge,
            &bench::DEFAULT_VEHICLE_COUNTS,
        ),
        Command::BenchMerkle(a) => run_bench(
            &a,
            explicit_seed,
            bench::bench_merkle,
            &bench::DEFAULT_ECU_COUNTS,
        ),
        Command::BenchStorage(a) => run_bench(
            &a,
            explicit_seed,
            bench::bench_storage,
            &bench::DEFAULT_BLOCK_COUNTS,
        ),
    }
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let explicit_seed = argv.iter().any(|a| {
        a.to_str()
            .is_some_and(|s| s == "--seed" || s.starts_with("--seed="))
    });
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, explicit_seed) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            2
        }
    }
}
