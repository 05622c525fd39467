//! Command-line runner: `shiftlab <command> --config <path>`.

pub mod config;
mod commands;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;

/// Exit code 2.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code 3.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] crate::Error),
    #[error("io error: {0}")]
    Io(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(e) if is_config(e) => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        }
    }
}

fn is_config(e: &crate::Error) -> bool {
    match e {
        crate::Error::Config(_) => true,
        crate::Error::AtTemperature { source, .. } => is_config(source),
        _ => false,
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "shiftlab", version, about = "SGD steady states and shift-curvature test loss on synthetic landscapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Temperature sweep of expected train/test loss and basin masses.
    Sweep(CommonArgs),
    /// Derivative, curl and quadrature self-checks.
    Validate(CommonArgs),
    /// Line profiles between paired minima and Taylor predictions.
    Probe(CommonArgs),
    /// SGD chains and their histogram.
    Sgd(CommonArgs),
    /// Fokker–Planck evolution toward the steady state.
    Fp(CommonArgs),
    /// Reparametrization invariance report.
    ReparamCheck(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of quadrature,laplace,sgd_mc.
    #[arg(long)]
    methods: Option<String>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let (name, args) = match &command {
        Command::Sweep(a) => ("sweep", a),
        Command::Validate(a) => ("validate", a),
        Command::Probe(a) => ("probe", a),
        Command::Sgd(a) => ("sgd", a),
        Command::Fp(a) => ("fp", a),
        Command::ReparamCheck(a) => ("reparam-check", a),
    };
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let methods = match &args.methods {
        Some(m) => Some(
            m.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(crate::oracle::Method::parse)
                .collect::<crate::Result<Vec<_>>>()
                .map_err(|e| CliError::Config(e.to_string()))?,
        ),
        None => None,
    };
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.as_ref()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(name));
    std::fs::create_dir_all(&out)?;
    let run = commands::Run { cfg, out };
    match command {
        Command::Sweep(_) => run.sweep(methods),
        Command::Validate(_) => run.validate(),
        Command::Probe(_) => run.probe(),
        Command::Sgd(_) => run.sgd(),
        Command::Fp(_) => run.fp(),
        Command::ReparamCheck(_) => run.reparam_check(),
    }
}
