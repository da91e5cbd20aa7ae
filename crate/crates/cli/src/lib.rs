//! Command-line front end: configuration, subcommands and result files.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{load_config, parse_config, ExperimentConfig, Overrides, Scheme};

pub const VERSION: &str = env!("OTAMV_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }

    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) | CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "otamv", version = VERSION, about = "Over-the-air majority-vote experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment file. Without it every section takes its default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// ppm, obda, obda-no-tci or ideal; overrides the file.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory; overrides the file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Federated training; writes rounds.csv and summary.json.
    Train {
        #[command(flatten)]
        common: Common,
        /// Put measured per-round wall time in rounds.csv instead of 0.
        #[arg(long)]
        wall_clock: bool,
    },
    /// Per-symbol PMEPR with random votes; writes pmepr.csv.
    Pmepr {
        #[command(flatten)]
        common: Common,
        /// Number of symbols per series.
        #[arg(long)]
        symbols: Option<usize>,
        /// Comma-separated pulse widths for the PPM series.
        #[arg(long, value_delimiter = ',')]
        m_pulse: Option<Vec<usize>>,
    },
    /// Closed-form tables; writes bound_vs_n.csv and error_vs_xi.csv.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo versus closed-form checks. Exit code 1 if any fails.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Trials for the full-chain energy checks.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
}

fn resolve(common: &Common) -> Result<ExperimentConfig, CliError> {
    let over = Overrides {
        seed: common.seed,
        scheme: common.scheme,
        output_dir: common.output.clone(),
    };
    match &common.config {
        Some(path) => load_config(path, &over),
        None => parse_config("", &over),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Parse `args` (including the program name) and run the chosen subcommand.
/// Returns the lines to print on success.
pub fn run<I, T>(args: I) -> Result<Vec<String>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(cli.command)
}

pub fn execute(command: Command) -> Result<Vec<String>, CliError> {
    match command {
        Command::Train { common, wall_clock } => {
            let cfg = resolve(&common)?;
            with_threads(common.threads, || commands::cmd_train(&cfg, wall_clock))?
        }
        Command::Pmepr {
            common,
            symbols,
            m_pulse,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(n) = symbols {
                cfg.pmepr.symbols = n;
            }
            if let Some(list) = m_pulse {
                cfg.pmepr.m_pulse = list;
            }
            let problems = cfg.violations();
            if !problems.is_empty() {
                return Err(CliError::Config(problems.join("; ")));
            }
            with_threads(common.threads, || commands::cmd_pmepr(&cfg, common.scheme))?
        }
        Command::Analyze { common } => {
            let cfg = resolve(&common)?;
            commands::cmd_analyze(&cfg)
        }
        Command::Validate { common, trials } => {
            let seed = match &common.config {
                Some(_) => resolve(&common)?.seed,
                None => common.seed.unwrap_or(1),
            };
            with_threads(common.threads, || commands::cmd_validate(seed, trials))?
        }
    }
}
