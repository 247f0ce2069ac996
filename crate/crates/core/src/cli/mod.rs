//! Command-line front end: argument parsing, run configuration, model files
//! and the subcommands of the `ctxml` binary.

mod commands;
pub mod config;
pub mod model_file;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub use commands::{parameter_names, run_command};
pub use config::{DataConfig, EncoderConfig, LikelihoodConfig, RunConfig};
pub use model_file::{LoadedModel, ModelFile, FORMAT_VERSION};

#[derive(Debug, Parser)]
#[command(name = "ctxml", version, about = "Contextualized generalized linear models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Run configuration (JSON) for `fit` and `atoms`, generator spec for `simulate`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress and warnings on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model (or bootstrap ensemble) from a run config.
    Fit,
    /// Predict outcomes and sample-specific parameters for a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Outcome density of a pseudo-sampled model at one (context, x) row.
    Density {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated context values.
        #[arg(long, allow_hyphen_values = true)]
        context: String,
        /// Comma-separated predictor values.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, allow_hyphen_values = true)]
        y_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        y_max: Option<f64>,
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// Identifiability heuristic and, with data, the empirical rank check.
    CheckId {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
        /// population, linear_vc, mlp or ngam.
        #[arg(long, default_value = "linear_vc")]
        encoder_class: String,
        /// CSV holding the context and predictor columns.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated context column names (with --data).
        #[arg(long)]
        context_cols: Option<String>,
        /// Comma-separated predictor column names (with --data).
        #[arg(long)]
        predictor_cols: Option<String>,
    },
    /// Generate a synthetic dataset and its ground truth.
    Simulate {
        /// Generator spec (JSON); defaults to --config.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Fit atoms, cluster them and stitch component transmission curves.
    Atoms {
        #[arg(long = "l")]
        l: usize,
        #[arg(long = "k")]
        k: usize,
        /// Predictor index the curves are drawn along.
        #[arg(long, default_value_t = 0)]
        predictor: usize,
        #[arg(long, default_value_t = 200)]
        grid_points: usize,
    },
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Data(_) | Error::Csv(_) | Error::Json(_) | Error::Shape { .. } => 2,
        Error::Divergence { .. } => 3,
        Error::Version { .. } => 4,
        Error::NotPseudo(_) => 5,
        Error::Unsupported(_) => 6,
        Error::Io(_) | Error::Numeric(_) | Error::State(_) => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
