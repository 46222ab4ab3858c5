//! `spce`: synthesize ensembles, build stochastic PCE surrogates, sample
//! them, and report sensitivity and validation metrics.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

pub mod build;
pub mod gsa;
pub mod sample;
pub mod surrogate;
pub mod synthesize;
pub mod validate;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spce_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    /// 0 ok, 2 usage or input, 3 domain violation, 4 corrupt artifact,
    /// 5 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use spce_core::Error as E;
        match self {
            CliError::Core(E::Domain(_)) => 3,
            CliError::Core(E::Corrupt(_)) => 4,
            CliError::Core(E::Numerical(_) | E::RankDeficient { .. }) => 5,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "spce", version, about = "Stochastic polynomial chaos surrogates for noisy simulators")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "SPCE_THREADS")]
    pub threads: Option<usize>,

    /// Omit wall-clock timings so reports are byte-identical across runs.
    #[arg(long, global = true)]
    pub no_timings: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic replica ensemble.
    Synthesize(synthesize::SynthesizeArgs),
    /// Fit a joint PCE (vector data) or KLPC (field data) surrogate.
    Build(build::BuildArgs),
    /// Draw realizations from a surrogate at given parameter points.
    Sample(sample::SampleArgs),
    /// Sobol indices per output or grid point.
    Gsa(gsa::GsaArgs),
    /// Hold-out validation against an ensemble.
    Validate(validate::ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GermArg {
    Normal,
    Uniform,
}

impl From<GermArg> for spce_core::basis::GermKind {
    fn from(g: GermArg) -> Self {
        match g {
            GermArg::Normal => Self::Normal,
            GermArg::Uniform => Self::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Common {
    pub no_timings: bool,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let common = Common { no_timings: cli.no_timings };
    let work = move || match cli.command {
        Command::Synthesize(a) => synthesize::run(&a),
        Command::Build(a) => build::run(&a, &common),
        Command::Sample(a) => sample::run(&a),
        Command::Gsa(a) => gsa::run(&a),
        Command::Validate(a) => validate::run(&a),
    };
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?
            .install(work),
        None => work(),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| CliError::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Csv { path: path.to_path_buf(), source: e })
}

pub(crate) fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Csv { path: path.to_path_buf(), source: e }
}

/// `report.json` → `report.csv`.
pub(crate) fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}
