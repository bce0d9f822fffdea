//! `cdtree`: fit, evaluate and inspect conditional density trees from CSV files.
//!
//! Exit status is 0 on success, 1 for input, I/O or validation problems and
//! 2 when a computation fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "cdtree",
    version,
    about = "Conditional density trees with MDL-optimal histogram leaves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    /// Number of split quantiles at the coarsest granularity level
    #[arg(long, default_value_t = 5)]
    pub c: u32,
    /// Step size of the coarse bin-count scan
    #[arg(long, default_value_t = 30)]
    pub g: usize,
    /// Standard deviation of the Gaussian jitter added at ingestion (0 disables)
    #[arg(long = "jitter-sd", default_value_t = 1e-3)]
    pub jitter_sd: f64,
    /// Smallest number of rows a leaf may hold
    #[arg(long = "min-leaf", default_value_t = 1)]
    pub min_leaf: usize,
    /// Seed for jitter, fold assignment and noise injection
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run on a single thread
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a tree from a CSV file and write the model
    Fit {
        /// Training CSV with a header row
        #[arg(long)]
        train: PathBuf,
        /// Name of the target column
        #[arg(long)]
        target: String,
        #[command(flatten)]
        fit: FitArgs,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean held-out negative log-likelihood of a model on a CSV file
    Evaluate {
        /// Model file written by `fit`
        #[arg(long)]
        model: PathBuf,
        /// CSV file with the model's feature columns (and target)
        #[arg(long)]
        data: PathBuf,
        /// Log density (nats) charged for zero-density points
        #[arg(long = "floor-nats", default_value_t = cdtree::eval::DEFAULT_FLOOR_NATS, allow_negative_numbers = true)]
        floor_nats: f64,
    },
    /// K-fold cross-validation
    Cv {
        /// CSV file with a header row
        #[arg(long)]
        data: PathBuf,
        /// Name of the target column
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Take the target range from the whole file instead of each training fold
        #[arg(long = "shared-bounds")]
        shared_bounds: bool,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Write the log density of every row's target
    Predict {
        /// Model file written by `fit`
        #[arg(long)]
        model: PathBuf,
        /// CSV file with the model's feature columns (and target)
        #[arg(long)]
        data: PathBuf,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the predicted density curve for one feature vector
    Density {
        /// Model file written by `fit`
        #[arg(long)]
        model: PathBuf,
        /// Row of --data whose features are used
        #[arg(long, conflicts_with = "x", requires = "data")]
        row: Option<usize>,
        /// CSV file holding the row selected by --row
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated feature values in model column order
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a model as rules, a dot graph or JSON
    Export {
        /// Model file written by `fit`
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = ExportFormat::Text)]
        format: ExportFormat,
        /// Write to a file instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count splits on injected irrelevant features
    Robustness {
        /// CSV file with a header row
        #[arg(long)]
        data: PathBuf,
        /// Name of the target column
        #[arg(long)]
        target: String,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Comma-separated numbers of injected features
        #[arg(long, value_delimiter = ',', default_value = "3,5,10,20")]
        w: Vec<usize>,
        /// Number of seeds, counted up from --seed
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Generate synthetic data
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Subcommand, Debug)]
enum SynthKind {
    /// x1 ~ U(0,1); y uniform on [0, 0.5] or [0.5, 1] depending on x1 ≤ 0.5
    Step {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Extra standard-normal feature columns
        #[arg(long, default_value_t = 0)]
        noise: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform features and a standard-normal target independent of them
    Noise {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ExportFormat {
    Text,
    Dot,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Mode {
    Independent,
    Dependent,
}

fn run(cli: Cli) -> cdtree::Result<()> {
    match cli.command {
        Command::Fit {
            train,
            target,
            fit,
            out,
        } => commands::fit(&train, &target, &fit, &out),
        Command::Evaluate {
            model,
            data,
            floor_nats,
        } => commands::evaluate(&model, &data, floor_nats),
        Command::Cv {
            data,
            target,
            folds,
            shared_bounds,
            fit,
        } => commands::cv(&data, &target, folds, shared_bounds, &fit),
        Command::Predict { model, data, out } => commands::predict(&model, &data, &out),
        Command::Density {
            model,
            row,
            data,
            x,
            points,
            out,
        } => {
            let source = match (row, data, x) {
                (Some(r), Some(d), None) => commands::Point::Row(d, r),
                (None, _, Some(x)) => commands::Point::Values(x),
                _ => {
                    return Err(cdtree::Error::InvalidConfig(
                        "give either --row with --data, or --x".into(),
                    ))
                }
            };
            commands::density(&model, source, points, &out)
        }
        Command::Export { model, format, out } => commands::export(&model, format, out.as_deref()),
        Command::Robustness {
            data,
            target,
            mode,
            w,
            seeds,
            fit,
        } => commands::robustness(&data, &target, mode, &w, seeds, &fit),
        Command::Synth { kind } => match kind {
            SynthKind::Step {
                n,
                noise,
                seed,
                out,
            } => commands::synth_step(n, noise, seed, &out),
            SynthKind::Noise { n, m, seed, out } => commands::synth_noise(n, m, seed, &out),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
