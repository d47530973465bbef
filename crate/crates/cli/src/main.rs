//! `wiredepth` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{CliError, Output};

#[derive(Debug, Parser)]
#[command(name = "wiredepth", version, about = "Recover vertex depths of a 2D wireframe sketch")]
struct Cli {
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Record wall-clock times as 0 so that report files are reproducible.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate displaced-corner training rows from random prisms.
    GenData(GenDataArgs),
    /// Train the corner network on a dataset file.
    Train(TrainArgs),
    /// Reconstruct depths for a sketch.
    Reconstruct(ReconstructArgs),
    /// Compare a reconstruction against its target.
    Evaluate(EvaluateArgs),
    /// Run the generated shape suite and the population sweep.
    Benchmark(BenchmarkArgs),
    /// Convert a depth-annotated wireframe to OBJ.
    ExportObj(ExportObjArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 1000)]
    pub prisms: usize,
    /// Number of apex displacement values per corner.
    #[arg(long, default_value_t = wiredepth::datagen::DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Training report path; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub pop: usize,
    #[arg(long, default_value_t = 200)]
    pub gens: usize,
    #[arg(long, default_value_t = 0.25)]
    pub mutation_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    pub init_range: f64,
    #[arg(long, default_value_t = 0.1)]
    pub hc_step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub hc_min_step: f64,
    #[arg(long, default_value_t = 200_000)]
    pub hc_max_evals: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Report path; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the reconstruction as OBJ.
    #[arg(long)]
    pub obj: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub candidate: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Score both depth vectors with this network.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Success when the normalized-scale rms is at most this.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// Also write the metrics as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated subset of prism, box, l-block, house.
    #[arg(long, value_delimiter = ',', default_value = "prism,box,l-block,house")]
    pub shapes: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub pop: usize,
    #[arg(long, default_value_t = 200)]
    pub gens: usize,
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    #[arg(long, default_value = "house")]
    pub sweep_shape: String,
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000")]
    pub sweep_pops: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub sweep_gens: usize,
    /// Output directory for the report, table and series files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportObjArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Output {
        quiet: cli.quiet,
        no_timing: cli.no_timing,
    };
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a, &out),
        Command::Train(a) => commands::train(a, &out),
        Command::Reconstruct(a) => commands::reconstruct(a, &out),
        Command::Evaluate(a) => commands::evaluate(a, &out),
        Command::Benchmark(a) => commands::benchmark(a, &out),
        Command::ExportObj(a) => commands::export_obj(a, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Input(e) | CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}
