mod commands;
mod config;
mod failure;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::{Failure, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(name = "fmdl", version, about = "Two-stream face manipulation detection and localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write noise residuals of images as raw float arrays.
    ExtractNoise(ExtractNoiseArgs),
    /// Derive ground-truth masks from pristine/manipulated pairs in a manifest.
    MakeMasks(MakeMasksArgs),
    /// Generate a synthetic spliced dataset with exact masks.
    Synth(SynthArgs),
    /// Train the detector from a manifest.
    Train(TrainArgs),
    /// Score a manifest split and write an evaluation report.
    Eval(EvalArgs),
    /// Export fused localization maps.
    Localize(LocalizeArgs),
    /// Merge evaluation reports into a text and CSV table.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Flat TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set lr=0.001`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    Wavelet,
    Srm,
}

#[derive(Args, Debug)]
pub struct ExtractNoiseArgs {
    /// Image files or directories of images.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// AWGN standard deviation assumed by the wavelet filter.
    #[arg(long, default_value_t = 5.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = FilterArg::Wavelet)]
    filter: FilterArg,
}

#[derive(Args, Debug)]
pub struct MakeMasksArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Minimum per-pixel difference on the [0, 1] scale.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    /// Skip the 3x3 closing/opening.
    #[arg(long)]
    no_cleanup: bool,
    /// Model input size, which fixes the prediction-scale sidecars.
    #[arg(long, default_value_t = 64)]
    input_size: usize,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of training pairs.
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    val_count: usize,
    #[arg(long, default_value_t = 0)]
    test_count: usize,
    /// Image side length.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Directory of base images; procedural textures when omitted.
    #[arg(long)]
    base_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StepArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    All,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Manifest path; overrides the `manifest` key.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = StepArg::All)]
    step: StepArg,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(long)]
    out: PathBuf,
    /// Per-scale fusion weights.
    #[arg(long, default_value = "0.1,0.2,0.7")]
    gamma: String,
    /// Binarization threshold for localization metrics.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Row label used by `report`.
    #[arg(long)]
    name: Option<String>,
    /// Also write ROC and precision/recall curves as CSV.
    #[arg(long)]
    curves: bool,
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Images to localize; mutually exclusive with --manifest.
    #[arg(long, num_args = 1.., conflicts_with = "manifest")]
    input: Vec<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    split: SplitArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "0.1,0.2,0.7")]
    gamma: String,
    /// Also export backbone taps and per-scale maps as raw arrays.
    #[arg(long)]
    debug: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// EvalReport JSON files, one row each.
    #[arg(required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(v) = std::env::var("FMDL_WORKERS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Failure::usage(format!("FMDL_WORKERS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(format!("worker pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_workers()?;
    match cli.command {
        Command::ExtractNoise(a) => commands::extract_noise(a),
        Command::MakeMasks(a) => commands::make_masks(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Localize(a) => commands::localize(a),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
