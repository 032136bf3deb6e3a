use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "projspec", version, about = "Spectral reflectance and projector SPD estimation from RGB captures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a principal-component basis to a spectral database.
    FitBasis(FitBasisArgs),
    /// Synthesize RGB observations from known spectra.
    Simulate(SimulateArgs),
    /// Jointly estimate reflectances and primary SPDs from observations.
    Estimate(EstimateArgs),
    /// Compare estimated reflectances against the truth.
    Evaluate(EvaluateArgs),
    /// Run fit-basis, simulate, estimate and evaluate from one configuration file.
    Run(RunArgs),
    /// Write a surrogate projector SPD database, one file per primary.
    GenSurrogateSpd(GenSpdArgs),
    /// Write a surrogate reflectance database.
    GenSurrogateReflectance(GenReflectanceArgs),
    /// Write Gaussian camera sensitivities.
    GenCamera(GenCameraArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 400.0)]
    pub grid_start: f64,
    #[arg(long, default_value_t = 10.0)]
    pub grid_step: f64,
    #[arg(long, default_value_t = 31)]
    pub grid_count: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FitBasisArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub rank: usize,
    /// reflectance, red, green or blue
    #[arg(long)]
    pub role: String,
    /// Curve label to leave out; may be repeated.
    #[arg(long)]
    pub exclude: Vec<String>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub camera: PathBuf,
    /// Red, green and blue basis files, in that order.
    #[arg(long, num_args = 3, value_names = ["RED", "GREEN", "BLUE"])]
    pub spd_basis: Vec<PathBuf>,
    #[arg(long)]
    pub beta: PathBuf,
    #[arg(long)]
    pub gains: PathBuf,
    #[arg(long)]
    pub reflectances: PathBuf,
    /// Noise standard deviation as a fraction of the mean clean signal.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub observations: PathBuf,
    #[arg(long)]
    pub ref_basis: PathBuf,
    #[arg(long, num_args = 3, value_names = ["RED", "GREEN", "BLUE"])]
    pub spd_basis: Vec<PathBuf>,
    #[arg(long)]
    pub camera: PathBuf,
    /// Band preset: 3, 9 or 21.
    #[arg(long, required_unless_present = "gains", conflicts_with = "gains")]
    pub bands: Option<String>,
    /// Gains file used instead of a band preset.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    #[arg(long, default_value_t = 0.125)]
    pub sigma1: f64,
    #[arg(long, default_value_t = 0.005)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 550.0)]
    pub lambda_f: f64,
    /// Anchored illumination index; defaults to the preset's or the last one.
    #[arg(long)]
    pub anchor: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Solve the per-pixel reflectance problems on one thread.
    #[arg(long)]
    pub serial: bool,
    #[arg(long)]
    pub line_search: bool,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Directory written by `estimate`.
    #[arg(long)]
    pub estimated: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Fresh output directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenSpdArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 13)]
    pub projectors: usize,
    /// Shared spectral shapes per primary; bounds the database rank.
    #[arg(long, default_value_t = 6)]
    pub shapes: usize,
    /// Per-projector lobe-centre jitter in nm.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenReflectanceArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub count: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenCameraArgs {
    /// Peak wavelengths of the red, green and blue channels.
    #[arg(long, num_args = 3, default_values_t = [600.0, 540.0, 460.0])]
    pub peaks: Vec<f64>,
    #[arg(long, default_value_t = 50.0)]
    pub width: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub output: PathBuf,
}
