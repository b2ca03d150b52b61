//! Command-line front end: synthesize data, preprocess, train, evaluate,
//! sweep presets, report parameter budgets, time inference and diagnose
//! experimental quality.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lightgan::config::CliConfig;
use lightgan::datapipe::{Degrade, PairingMode};
use lightgan::models::storage::TrainerKind;
use lightgan::training::{Direction, ModelChoice};

#[derive(Parser, Debug)]
#[command(name = "lightgan", version, about = "Lightweight U-Net GANs for confocal to STED translation")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic confocal/STED dataset.
    Synth(SynthArgs),
    /// Contrast-stretch, register and pad a dataset into a new directory.
    Preprocess(PreprocessArgs),
    /// Train Pix2Pix or CycleGAN, optionally with k-fold cross-validation.
    Train(TrainArgs),
    /// Score images against targets.
    Eval(EvalArgs),
    /// Train and evaluate several presets and tabulate the results.
    Sweep(SweepArgs),
    /// Parameter counts and projected checkpoint storage of the presets.
    Params(ParamsArgs),
    /// Flag experimental images that disagree with the generator's prediction.
    Diagnose(DiagnoseArgs),
    /// Per-image inference time for increasing image counts.
    Time(TimeArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    /// none, photobleach(F) or artifact(S).
    #[arg(long)]
    pub degrade: Option<Degrade>,
    #[arg(long)]
    pub low_quality_fraction: Option<f64>,
    #[arg(long)]
    pub psf_confocal: Option<f64>,
    #[arg(long)]
    pub psf_sted: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub bit_depth: Option<u8>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset root with one subdirectory per domain.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_parser = parse_pairing)]
    pub pairing: Option<PairingMode>,
    /// Registration search radius in pixels; 0 disables registration.
    #[arg(long)]
    pub radius: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainFlags {
    #[arg(long, value_parser = parse_trainer)]
    pub trainer: Option<TrainerKind>,
    /// Preset name, e.g. model9.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelChoice>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Checkpoint every N epochs.
    #[arg(long)]
    pub interval: Option<usize>,
    /// Base width of a doubling discriminator sized independently of the generator.
    #[arg(long)]
    pub disc_base: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub lsgan: bool,
    #[arg(long)]
    pub literal_minimax: bool,
    #[arg(long)]
    pub lr_decay: bool,
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Hold out this many samples (last by id) as a test split.
    #[arg(long)]
    pub test_count: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run k-fold cross-validation with this many folds.
    #[arg(long)]
    pub cv: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory of generated images named like the targets.
    #[arg(long, conflicts_with = "checkpoint")]
    pub generated: Option<PathBuf>,
    /// Generate from the source domain with this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Domain scored against the targets as a reference series.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Comma-separated preset indices.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9")]
    pub presets: Vec<u8>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ParamsArgs {
    #[arg(long, value_parser = parse_trainer)]
    pub trainer: Option<TrainerKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub interval: Option<usize>,
    /// Print CSV instead of aligned text.
    #[arg(long)]
    pub csv: bool,
    /// Also write params.txt and params.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Domain holding the experimental images (defaults to the target domain).
    #[arg(long)]
    pub experimental: Option<String>,
    /// SSIM threshold; calibrated on --validation when omitted.
    #[arg(long)]
    pub tau: Option<f64>,
    /// High-quality dataset root for threshold calibration.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TimeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,8,64")]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, value_parser = parse_direction, default_value = "forward")]
    pub direction: Direction,
    /// Fail unless per-image time never increases with the count.
    #[arg(long)]
    pub self_test: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_pairing(s: &str) -> Result<PairingMode, String> {
    match s {
        "paired" => Ok(PairingMode::Paired),
        "unpaired" => Ok(PairingMode::Unpaired),
        _ => Err("expected paired or unpaired".into()),
    }
}

fn parse_trainer(s: &str) -> Result<TrainerKind, String> {
    match s {
        "pix2pix" => Ok(TrainerKind::Pix2pix),
        "cyclegan" => Ok(TrainerKind::Cyclegan),
        _ => Err("expected pix2pix or cyclegan".into()),
    }
}

fn parse_model(s: &str) -> Result<ModelChoice, String> {
    s.parse().map(ModelChoice::Preset).map_err(|e: lightgan::Error| e.to_string())
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "forward" => Ok(Direction::Forward),
        "backward" => Ok(Direction::Backward),
        _ => Err("expected forward or backward".into()),
    }
}

/// Configuration or usage problem (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let is_usage = err.chain().any(|c| {
        c.downcast_ref::<UsageError>().is_some() || matches!(c.downcast_ref::<lightgan::Error>(), Some(lightgan::Error::Config(_)))
    });
    if is_usage {
        1
    } else {
        2
    }
}

fn load_config(global: &Global) -> anyhow::Result<CliConfig> {
    match &global.config {
        Some(p) => Ok(CliConfig::load(p)?),
        None => Ok(CliConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = load_config(&cli.global).and_then(|cfg| commands::run(cli, cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
