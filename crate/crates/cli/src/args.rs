use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Simulate, denoise, and score 4D diffusion-weighted volumes.
///
/// Volumes are read and written as NIfTI-1 (`.nii`, `.nii.gz`) or the raw
/// `P2SRAW1` format (`.p2s`, `.raw`), chosen by file extension.
#[derive(Parser, Debug)]
#[command(name = "p2s", version, about, long_about = None)]
pub struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "P2S_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate clean and noisy phantom volumes
    Simulate(SimulateArgs),
    /// Denoise a 4D volume
    Denoise(DenoiseArgs),
    /// Score an estimate against a reference volume
    Evaluate(EvaluateArgs),
    /// Run simulate → denoise → evaluate over a parameter grid
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct PhantomArgs {
    /// Phantom description (TOML); defaults to the built-in brain phantom
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,

    /// Phantom size l,w,h (built-in phantom only)
    #[arg(long, value_delimiter = ',', default_values_t = [24, 24, 24])]
    pub dims: Vec<usize>,

    /// Receive channels combined by sum of squares
    #[arg(long, default_value_t = 8)]
    pub channels: usize,

    /// Noise seed (default: the spec file's seed, or 0)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub phantom: PhantomArgs,

    /// Total volumes: 2 b=0 plus the rest on a b=1000 shell (built-in phantom only)
    #[arg(long, default_value_t = 30)]
    pub volumes: usize,

    /// Target SNRs (mean tissue b=0 signal over per-channel σ)
    #[arg(long, value_delimiter = ',', conflicts_with = "sigma")]
    pub snr: Vec<f64>,

    /// Per-channel noise σ, instead of --snr
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,

    /// Output file format
    #[arg(long, value_enum, default_value_t = FileFormat::Nii)]
    pub format: FileFormat,

    /// Also write the tissue mask
    #[arg(long)]
    pub write_mask: bool,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,

    /// Patch radius; patches are (2r+1)³ voxels
    #[arg(long, default_value_t = 0)]
    pub radius: usize,

    /// ols, ridge, or svd-rank-R (fixed-rank local SVD comparison baseline)
    #[arg(long, default_value = "ols")]
    pub model: Model,

    /// Ridge penalty; required with --model ridge
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Only voxels inside this mask are denoised
    #[arg(long, value_name = "FILE")]
    pub mask: Option<PathBuf>,

    /// What voxels outside the mask hold
    #[arg(long, value_enum, default_value_t = PassthroughArg::Copy)]
    pub passthrough: PassthroughArg,

    /// Least-squares route
    #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
    pub solver: SolverArg,

    /// Tile edge for the svd-rank baseline
    #[arg(long, default_value_t = p2s_core::baseline::DEFAULT_BLOCK_EDGE)]
    pub block: usize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub reference: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub estimate: PathBuf,

    /// Restrict scoring to this mask
    #[arg(long, value_name = "FILE")]
    pub mask: Option<PathBuf>,

    /// SNR label for the report row
    #[arg(long)]
    pub snr: Option<f64>,

    /// Method label for the report row
    #[arg(long, default_value = "estimate")]
    pub method: String,

    /// Append the row to this CSV (header written when the file is new)
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// Also print a per-volume breakdown
    #[arg(long)]
    pub per_volume: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub phantom: PhantomArgs,

    /// Target SNRs
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 15.0, 20.0, 25.0, 30.0])]
    pub snr: Vec<f64>,

    /// Volume counts, each 2 b=0 plus a b=1000 shell (ignored with --spec)
    #[arg(long, value_delimiter = ',', default_values_t = [30])]
    pub volumes: Vec<usize>,

    /// Patch radii
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
    pub radius: Vec<usize>,

    /// Also score the svd-rank baseline at this rank
    #[arg(long, value_name = "R")]
    pub baseline_rank: Option<usize>,

    /// CSV destination (default: standard output)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Nii,
    #[value(name = "nii.gz")]
    NiiGz,
    P2s,
}

impl FileFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FileFormat::Nii => "nii",
            FileFormat::NiiGz => "nii.gz",
            FileFormat::P2s => "p2s",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassthroughArg {
    Copy,
    Zero,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverArg {
    Auto,
    Qr,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Ols,
    Ridge,
    SvdRank(usize),
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ols" => Ok(Model::Ols),
            "ridge" => Ok(Model::Ridge),
            _ => s
                .strip_prefix("svd-rank-")
                .and_then(|r| r.parse().ok())
                .filter(|&r: &usize| r > 0)
                .map(Model::SvdRank)
                .ok_or_else(|| format!("unknown model {s:?}; expected ols, ridge, or svd-rank-R with R >= 1")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn model_names() {
        assert_eq!("ols".parse::<Model>(), Ok(Model::Ols));
        assert_eq!("svd-rank-4".parse::<Model>(), Ok(Model::SvdRank(4)));
        assert!("svd-rank-0".parse::<Model>().is_err());
        assert!("lasso".parse::<Model>().is_err());
    }
}
