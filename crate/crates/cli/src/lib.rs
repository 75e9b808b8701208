//! `bfnn` command-line pipeline: generate channels, estimate them, train the
//! beamforming network, and evaluate SE-versus-SNR sweeps.
//!
//! Every command prints one JSON summary line on stdout and maps failures to
//! exit codes: 64 bad usage or config, 65 bad input data, 70 internal error,
//! 74 I/O error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_INTERNAL: i32 = 70;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("internal: {0}")]
    Internal(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<bfnn_core::Error> for CliError {
    fn from(e: bfnn_core::Error) -> Self {
        use bfnn_core::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Io(io) => CliError::Io(io),
            E::State(_) | E::Numerical(_) => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bfnn",
    version,
    about = "Beamforming neural network experiments"
)]
pub struct Cli {
    /// Worker threads (default: all cores for gen/estimate/eval, 1 for train).
    #[arg(long, global = true, env = "BFNN_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct Overrides {
    /// Run configuration file (TOML); defaults are used when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Pilot-to-noise ratio in dB ("inf" for noiseless pilots).
    #[arg(long, allow_hyphen_values = true)]
    pub pnr_db: Option<f64>,
    #[arg(long)]
    pub l_est: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Master seed of the stage the command runs.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val/test channel datasets.
    Gen {
        #[command(flatten)]
        opts: Overrides,
        /// Output directory for train.bfds, val.bfds and test.bfds.
        #[arg(long)]
        out: PathBuf,
        /// Multiply the configured split sizes.
        #[arg(long, default_value_t = 1.0)]
        count_scale: f64,
    },
    /// Estimate every channel of a dataset with the hierarchical pilot estimator.
    Estimate {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on estimated (or perfect) channels.
    Train {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Precomputed estimates for the training split; estimated in-process otherwise.
        #[arg(long)]
        train_est: Option<PathBuf>,
        #[arg(long)]
        val_est: Option<PathBuf>,
        /// Train on the true channels instead of estimates.
        #[arg(long, conflicts_with_all = ["train_est", "val_est"])]
        perfect_csi: bool,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON file for the per-epoch loss history.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run the SE-versus-SNR sweep on a test split.
    Eval {
        #[command(flatten)]
        opts: Overrides,
        /// One model, or one per (PNR, L_est) condition.
        #[arg(long = "model", required = false)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// JSON manifest with seeds, hashes and the full configuration.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Methods to evaluate (comma separated); defaults to the config.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Accept inputs produced under different configurations.
        #[arg(long)]
        allow_mixed: bool,
    },
    /// Print the dense-layer FLOP count of a model (or of the reference network).
    Flops {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        n_t: usize,
        /// Also print the per-layer parameter table on stderr.
        #[arg(long)]
        params: bool,
    },
    /// Re-render a plot from a report CSV and report SNR gaps.
    Report {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = 8.0)]
        target_se: f64,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("bfnn: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns its summary line.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let serial = matches!(cli.command, Command::Train { .. });
    let threads = cli.threads.unwrap_or(if serial { 1 } else { 0 });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    pool.install(|| commands::dispatch(cli.command))
}
