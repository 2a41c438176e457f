mod commands;
mod config;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<physfit::error::Error> for Failure {
    fn from(e: physfit::error::Error) -> Self {
        use physfit::error::Error as E;
        let code = match &e {
            E::Divergence { .. } | E::Integration { .. } | E::Conditioning { .. } | E::DegenerateColumn(_) => 3,
            E::DiscoveryFailed { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "physfit", version, about = "Physics-informed spline fitting, parameter estimation and equation discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set bsca.max_iters=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (same as `--set output=...`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Generator: ks, burgers, advdiff or multiscale.
    #[arg(long, default_value = "ks")]
    pub problem: String,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub lx: Option<f64>,
    #[arg(long)]
    pub lt: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Viscosity of the Burgers generator.
    #[arg(long, default_value_t = 0.1)]
    pub nu: f64,
    /// Also write a copy with this relative Gaussian noise level.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub noise_seed: u64,
    /// File format: bin (raw grid + JSON sidecar) or csv.
    #[arg(long, default_value = "bin")]
    pub format: String,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(short, long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Total BSCA iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Set every data, initial- and boundary-condition weight to this value.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Mini-batch schedule: number of batches.
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub iters_per_batch: Option<usize>,
    /// Print the first β update next to the plain gradient step.
    #[arg(long)]
    pub debug_step: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Pure data fit, optionally with data-driven knot rounds.
    Fit(ConfigArgs),
    /// Physics-informed parameter estimation.
    Estimate(EstimateArgs),
    /// Sparse equation discovery on a candidate library.
    Discover(ConfigArgs),
    /// Turn a run directory into CSV tables.
    Report {
        /// Run directory written by fit, estimate or discover.
        dir: PathBuf,
    },
}

fn threads_from_env() -> Result<(), Failure> {
    let Ok(v) = std::env::var("CONVEX_PIML_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("CONVEX_PIML_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|()| match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Discover(a) => commands::discover(&a),
        Command::Report { dir } => commands::report(&dir),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
