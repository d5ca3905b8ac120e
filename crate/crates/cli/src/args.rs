use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ocae_core::simgen::Magnitude;
use ocae_core::Layout;

#[derive(Debug, Parser)]
#[command(name = "ocae", version, about = "One-class attention autoencoder for 7-channel liquid sensors")]
pub struct Cli {
    /// JSON file of flag values, either flat or sectioned by subcommand.
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic sensor CSV, optionally with labelled anomalies.
    Generate(GenerateArgs),
    /// Train a detector bundle on a CSV of normal readings.
    Train(TrainArgs),
    /// Run the hyper-parameter search only and print the trial report.
    Tune(TuneArgs),
    /// Score a labelled CSV and print detection metrics.
    Eval(EvalArgs),
    /// Re-save a bundle and report the file sizes.
    Export(ExportArgs),
    /// Tail a live CSV, raise alarms and serve the HTTP API.
    Monitor(MonitorArgs),
    /// Generate, train, export and evaluate end to end.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    /// Seven tokens of one channel each.
    ChannelToken,
    /// A single token holding all seven channels.
    TimeAxis,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::ChannelToken => Layout::ChannelToken,
            LayoutArg::TimeAxis => Layout::TimeAxis,
        }
    }
}

fn magnitude(s: &str) -> Result<Magnitude, String> {
    s.parse().map_err(|e: ocae_core::Error| e.to_string())
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GenerateArgs {
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of rows (2000 is about 33 minutes at 1 Hz).
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: u64,
    /// Sampling rate in Hz, between 0.5 and 1.
    #[arg(long)]
    pub rate_hz: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Channel profile JSON; the built-in profile is used when omitted.
    #[arg(long, value_name = "FILE")]
    pub generator_config: Option<PathBuf>,
    /// Fraction of rows perturbed on pH or conductivity.
    #[arg(long, default_value_t = 0.0)]
    pub anomaly_rate: f64,
    /// Relative perturbation size, a value or a `lo..hi` range.
    #[arg(long, default_value = "0.02..0.03", value_parser = magnitude)]
    pub magnitude: Magnitude,
    /// Fraction of rows with a sentinel or probe-error cell.
    #[arg(long, default_value_t = 0.0)]
    pub corruption_rate: f64,
    /// Never corrupt an anomalous row.
    #[arg(long)]
    pub protect_labels: bool,
    /// Write `seq,label` pairs here.
    #[arg(long, value_name = "FILE")]
    pub labels_out: Option<PathBuf>,
}

/// Model and training settings shared by `train` and `pipeline`.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Adam step size.
    #[arg(long, visible_alias = "lr", default_value_t = 7e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Non-improving epochs before stopping early; 0 disables it.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Fraction of rows held out for validation, taken from the end.
    #[arg(long, default_value_t = 0.10)]
    pub val_fraction: f64,
    #[arg(long, value_enum, default_value_t = LayoutArg::ChannelToken)]
    pub layout: LayoutArg,
    /// Train with uniform attention weights (plain autoencoder baseline).
    #[arg(long)]
    pub no_attention: bool,
    /// Search hidden size, batch size, learning rate and epochs first.
    #[arg(long)]
    pub tune: bool,
    /// Trials for `--tune`.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// CSV of normal readings.
    #[arg(long)]
    pub data: PathBuf,
    /// Bundle output directory.
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Write the training report (history, threshold, trials) as JSON.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.10)]
    pub val_fraction: f64,
    #[arg(long, value_enum, default_value_t = LayoutArg::ChannelToken)]
    pub layout: LayoutArg,
    /// Also write the report here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// `seq,label` CSV; rows are matched on seq.
    #[arg(long)]
    pub labels: PathBuf,
    /// Also write the metrics JSON here.
    #[arg(long, value_name = "FILE")]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ExportArgs {
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Destination directory; defaults to rewriting `--model-dir` in place.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct MonitorArgs {
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Live CSV to tail.
    #[arg(long)]
    pub csv: PathBuf,
    /// Seconds between polls.
    #[arg(long, default_value_t = 2.0)]
    pub interval: f64,
    /// Consecutive anomalous rows that raise an alarm.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub alarm_n: u32,
    #[arg(long, default_value = ocae_monitor::service::DEFAULT_BIND)]
    pub bind: SocketAddr,
    /// Where retrained bundles go; defaults to `retrained/` next to the model directory.
    #[arg(long)]
    pub models_root: Option<PathBuf>,
    /// Write the final state here on shutdown.
    #[arg(long, value_name = "FILE")]
    pub snapshot: Option<PathBuf>,
    /// Stop after this many polls.
    #[arg(long)]
    pub max_cycles: Option<u64>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PipelineArgs {
    /// Working directory for the generated data, bundle and reports.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Training rows.
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: u64,
    /// Rows in the labelled test stream.
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub test_rows: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Seed of the test stream.
    #[arg(long, default_value_t = 2007)]
    pub test_seed: u64,
    /// Seed of the anomaly injection into the test stream.
    #[arg(long, default_value_t = 7)]
    pub inject_seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub anomaly_rate: f64,
    #[arg(long, default_value = "0.02..0.03", value_parser = magnitude)]
    pub magnitude: Magnitude,
    #[arg(long, value_name = "FILE")]
    pub generator_config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}
