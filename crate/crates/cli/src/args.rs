use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shapetime_core::synth::OffNominalMode;

#[derive(Debug, Parser)]
#[command(name = "shapetime", version, about = "Neutral shape and temporal function separation for time series")]
pub struct Cli {
    /// Worker threads for per-pair and per-subject parallelism [default: all cores]
    #[arg(long, global = true, value_parser = at_least_one)]
    pub threads: Option<usize>,

    /// Increase log verbosity on standard error (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate noisy ellipse traversals with ground-truth temporal functions
    SynthEllipse(SynthArgs),
    /// Estimate the neutral shape of a set of series and each series' temporal function
    Separate(SeparateArgs),
    /// Build a subject model from genuine series
    Enroll(EnrollArgs),
    /// Score series against a subject model (lower is more genuine-like)
    Score(ScoreArgs),
    /// Run the verification protocol on a dataset manifest
    Eval(EvalArgs),
    /// Dump the alignment posterior between two series
    Align(AlignArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// CSV with a channel header and an optional leading `t` column (seconds)
    Csv,
    /// SVC2004 signature text files
    Svc2004,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input file format
    #[arg(long, value_enum, default_value_t = InputFormat::Csv)]
    pub format: InputFormat,

    /// Sampling frequency (Hz) for CSV files without a `t` column; without it
    /// such files use the sample index as time
    #[arg(long, value_parser = positive)]
    pub fe: Option<f64>,

    /// Keep the pressure column of SVC2004 task 2 files (svc2004 only)
    #[arg(long)]
    pub keep_pressure: bool,

    /// Drop SVC2004 samples recorded with the pen up (svc2004 only)
    #[arg(long)]
    pub drop_pen_up: bool,
}

#[derive(Debug, Args)]
pub struct CentroidArgs {
    /// Kernel scale nu; tuned from the data when absent (nu_base * 2^j, j from -4 to 4)
    #[arg(long, value_parser = positive)]
    pub nu: Option<f64>,

    /// Maximum centroid refinement steps
    #[arg(long, default_value_t = 30)]
    pub max_iter: usize,

    /// Minimum relative inertia decrease for a refinement step to be accepted
    #[arg(long, default_value_t = 1e-4, value_parser = non_negative)]
    pub rel_tol: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of series
    #[arg(long, default_value_t = 20, value_parser = at_least_one)]
    pub n: usize,
    /// Gaussian noise standard deviation per channel
    #[arg(long, default_value_t = 1.5, value_parser = non_negative)]
    pub sigma: f64,
    /// Random seed
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Semi-axis along x
    #[arg(long, default_value_t = 2.0, value_parser = positive)]
    pub a0: f64,
    /// Semi-axis along y
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub b0: f64,
    /// Base frequency (Hz)
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub f0: f64,
    /// Sampling frequency (Hz)
    #[arg(long, default_value_t = 400.0, value_parser = positive)]
    pub fe: f64,
    /// Duration of each nominal traversal (s)
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub duration: f64,
    /// Half-width of the relative semi-axis jitter
    #[arg(long, default_value_t = 0.25, value_parser = non_negative)]
    pub amp_jitter: f64,
    /// Half-width of the relative frequency jitter
    #[arg(long, default_value_t = 0.1, value_parser = non_negative)]
    pub freq_jitter: f64,
    /// Half-width of the phase jitter (rad)
    #[arg(long, default_value_t = 0.25, value_parser = non_negative)]
    pub phase_jitter: f64,
    /// Also write off-nominal traversals (comma separated or repeated)
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    pub offnominal: Vec<OffNominalMode>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// Input series
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub centroid: CentroidArgs,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    /// Genuine training series (at least 2)
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub centroid: CentroidArgs,
    /// Weight of the shape term in the fused score
    #[arg(long, default_value_t = 0.85, value_parser = unit_interval)]
    pub alpha: f64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Model written by `enroll`
    #[arg(long)]
    pub model: PathBuf,
    /// Series to score
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    /// Override the model's fusion weight
    #[arg(long, value_parser = unit_interval)]
    pub alpha: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest (JSON)
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub centroid: CentroidArgs,
    /// Weight of the shape term in the fused score
    #[arg(long, default_value_t = 0.85, value_parser = unit_interval)]
    pub alpha: f64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Row series
    pub first: PathBuf,
    /// Column series
    pub second: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Kernel scale nu; tuned on the pair when absent (nu_base * 2^j, j from -4 to 4)
    #[arg(long, value_parser = positive)]
    pub nu: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".into())
    }
}

fn positive(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| if v > 0.0 { Ok(v) } else { Err("must be positive".into()) })
}

fn non_negative(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| if v >= 0.0 { Ok(v) } else { Err("must not be negative".into()) })
}

fn unit_interval(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| if (0.0..=1.0).contains(&v) { Ok(v) } else { Err("must lie in [0, 1]".into()) })
}

fn parse_mode(s: &str) -> Result<OffNominalMode, String> {
    s.parse().map_err(|e: shapetime_core::Error| e.to_string())
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("`{s}` is not a count")),
    }
}
