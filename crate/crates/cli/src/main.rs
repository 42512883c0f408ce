//! `strnn` command line: synthetic data generation, band-feature
//! extraction, training, evaluation, gradient checking, and saliency
//! reports. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use commands::{CliError, Overrides};

#[derive(Parser)]
#[command(
    name = "strnn",
    version,
    about = "Spatial-temporal recurrent network trainer and feature tooling"
)]
struct Cli {
    /// Seed for every seeded operation; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct OverrideArgs {
    /// Mode overriding the config file: strnn, srnn_only, trnn_only, non_sparse.
    #[arg(long)]
    mode: Option<String>,
    /// Named profile overriding the config file: seed or ckplus.
    #[arg(long)]
    profile: Option<String>,
}

impl OverrideArgs {
    fn overrides(&self, seed: Option<u64>) -> Overrides {
        Overrides {
            seed,
            mode: self.mode.clone(),
            profile: self.profile.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Gen {
        /// Output .stv path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 4)]
        height: usize,
        #[arg(long, default_value_t = 4)]
        width: usize,
        /// Slices per sample.
        #[arg(long = "t-len", default_value_t = 9)]
        t_len: usize,
        /// Values per cell.
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 30)]
        samples: usize,
        #[arg(long = "spatial-signal", default_value_t = 1.0)]
        spatial_signal: f64,
        #[arg(long = "temporal-signal", default_value_t = 1.0)]
        temporal_signal: f64,
        #[arg(long = "noise-sigma", default_value_t = 0.5)]
        noise_sigma: f64,
    },
    /// Train a model and write a checkpoint.
    Train {
        /// key=value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Labeled training data (.stv).
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        over: OverrideArgs,
    },
    /// Evaluate a checkpoint: accuracy, per-class accuracy, confusion matrix.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled test data (.stv).
        #[arg(long)]
        data: PathBuf,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        /// Optional config; without it the built-in tiny profile runs both
        /// activations.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Maximum allowed relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[command(flatten)]
        over: OverrideArgs,
    },
    /// Turn raw recordings into band-feature volumes.
    Extract {
        /// Raw recordings (.stv with H=channels, W=1, D=1, T=samples).
        #[arg(long)]
        data: PathBuf,
        /// Output volumes (.stv).
        #[arg(long)]
        out: PathBuf,
        /// seed62, full, or a layout file path (default: seed62 for 62
        /// channels, one-column grid otherwise).
        #[arg(long)]
        layout: Option<String>,
        /// Slicing window width in steps.
        #[arg(long, default_value_t = 9)]
        width: usize,
        /// Bands file (`name low high` per line); default: the five
        /// standard bands.
        #[arg(long)]
        bands: Option<PathBuf>,
        /// Input sampling rate in Hz.
        #[arg(long, default_value_t = 256.0)]
        rate: f64,
        /// Integer decimation factor applied before analysis.
        #[arg(long, default_value_t = 1)]
        decimate: usize,
    },
    /// Print the spatial saliency map of a checkpoint and its CSV.
    Saliency {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional layout file to cross-check against the checkpoint.
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Optional CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen {
            out,
            classes,
            height,
            width,
            t_len,
            depth,
            samples,
            spatial_signal,
            temporal_signal,
            noise_sigma,
        } => commands::cmd_gen(
            &out,
            classes,
            height,
            width,
            t_len,
            depth,
            samples,
            spatial_signal,
            temporal_signal,
            noise_sigma,
            seed.unwrap_or(0),
        ),
        Command::Train {
            config,
            data,
            out,
            over,
        } => commands::cmd_train(config.as_deref(), &data, &out, &over.overrides(seed)),
        Command::Eval { checkpoint, data } => commands::cmd_eval(&checkpoint, &data),
        Command::Gradcheck { config, tol, over } => {
            commands::cmd_gradcheck(config.as_deref(), tol, &over.overrides(seed))
        }
        Command::Extract {
            data,
            out,
            layout,
            width,
            bands,
            rate,
            decimate,
        } => commands::cmd_extract(
            &data,
            &out,
            layout.as_deref(),
            width,
            bands.as_deref(),
            rate,
            decimate,
        ),
        Command::Saliency {
            checkpoint,
            layout,
            out,
        } => commands::cmd_saliency(&checkpoint, layout.as_deref(), out.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code() as u8)
        }
    }
}
