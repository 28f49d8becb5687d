use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use herald_core::g2::ExtrapolationModel;
use herald_core::generator::Scenario;
use herald_core::presets::Preset;

pub const OUTPUT_DIR_ENV: &str = "HERALD_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "herald",
    version,
    about = "Simulate and analyze time tags from a cavity-enhanced heralded photon source",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 malformed input data, \
                  4 analysis undefined for the data, 1 other failures.\n\
                  Outputs go to --output-dir, else the config's output_dir, else \
                  $HERALD_OUTPUT_DIR, else the current directory."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the multimode and single-mode correlation curves to CSV
    Analytic(AnalyticArgs),
    /// Run a measurement scenario and write a tag file
    Simulate(SimulateArgs),
    /// Histogram signal-minus-reference delays of a tag file
    Correlate(CorrelateArgs),
    /// Heralded autocorrelation g2(0) of a three-channel tag file
    G2(G2Args),
    /// Resonant share of heralded photons from a weak-cell and a strong-cell tag file
    Resonance(ResonanceArgs),
    /// Run a named measurement with its analysis
    Preset(PresetArgs),
    /// Print a configuration file with every key at its default
    ConfigTemplate(TemplateArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run configuration file (TOML)
    #[arg(short, long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Directory for output files
    #[arg(short, long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Mode truncation of the multimode curve [default: amplitude bound of 1e-4]
    #[arg(long, value_name = "N")]
    pub m_max: Option<usize>,
    /// Half-range of the delay grid, ns [default: 300]
    #[arg(long, value_name = "NS")]
    pub range_ns: Option<f64>,
    /// Number of grid points [default: 16384]
    #[arg(long, value_name = "N")]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Scenario: a (direct), b (absorption cell) or c (split signal)
    #[arg(long, value_name = "a|b|c")]
    pub scenario: Option<Scenario>,
    /// Random seed
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Tag file name inside the output directory [default: scenario-<letter>.tags]
    #[arg(long, value_name = "FILE")]
    pub tags: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Tag file to read
    pub tagfile: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Reference channel [default: 0]
    #[arg(long = "ref", value_name = "CH")]
    pub ref_channel: Option<u8>,
    /// Signal channel [default: 1]
    #[arg(long = "sig", value_name = "CH")]
    pub sig_channel: Option<u8>,
    /// Bin width, ns [default: 1]
    #[arg(long, value_name = "NS")]
    pub bin_ns: Option<f64>,
    /// Half-range of delays, ns [default: 100]
    #[arg(long, value_name = "NS")]
    pub range_ns: Option<f64>,
    /// Histogram CSV name inside the output directory [default: histogram.csv]
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct G2Args {
    /// Tag file to read
    pub tagfile: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Trigger channel [default: 0]
    #[arg(long, value_name = "CH")]
    pub trigger: Option<u8>,
    /// First arm channel [default: 1]
    #[arg(long, value_name = "CH")]
    pub arm_a: Option<u8>,
    /// Second arm channel [default: 2]
    #[arg(long, value_name = "CH")]
    pub arm_b: Option<u8>,
    /// Full coincidence window around each trigger, ns [default: 40]
    #[arg(long, value_name = "NS")]
    pub window_ns: Option<f64>,
    /// Widest extrapolation window, ns; ten windows up to it are counted [default: 2000]
    #[arg(long, value_name = "NS")]
    pub max_window_ns: Option<f64>,
    /// Fit form of the joint count against window width [default: linear-quadratic]
    #[arg(long, value_name = "MODEL")]
    pub model: Option<ExtrapolationModel>,
    /// Factor applied to the extrapolated joint count [default: 2]
    #[arg(long, value_name = "X")]
    pub bunching: Option<f64>,
    /// Also write the joint counts per window to this CSV in the output directory
    #[arg(long, value_name = "FILE")]
    pub n23_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ResonanceArgs {
    /// Tag file taken behind the weak cell
    pub low: PathBuf,
    /// Tag file taken behind the strong cell
    pub high: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Optical density of the weak cell [default: 0.3]
    #[arg(long, value_name = "OD")]
    pub od_low: Option<f64>,
    /// Optical density of the strong cell [default: 6]
    #[arg(long, value_name = "OD")]
    pub od_high: Option<f64>,
    /// Full coincidence window, ns [default: 40]
    #[arg(long, value_name = "NS")]
    pub window_ns: Option<f64>,
    /// Idler channel [default: 0]
    #[arg(long = "ref", value_name = "CH")]
    pub ref_channel: Option<u8>,
    /// Signal channel [default: 1]
    #[arg(long = "sig", value_name = "CH")]
    pub sig_channel: Option<u8>,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// fig2, fig3, fig4 or g2-table
    pub name: Preset,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Random seed
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TemplateArgs {
    /// Start from the simulation settings of a preset
    #[arg(long, value_name = "NAME")]
    pub preset: Option<Preset>,
}
