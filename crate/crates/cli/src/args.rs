use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mind_core::{Method, Sampler, SolverOptions};
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(name = "mind", version, about = "Mutual information through maximum-entropy copulas")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate I(features; targets) for columns of a table.
    EstimateMi(EstimateMiArgs),
    /// Maximum-entropy copula entropy of selected columns.
    CopulaEntropy(CopulaEntropyArgs),
    /// Achievable R^2 and RMSE for a given mutual information.
    Bounds(BoundsArgs),
    /// Gaussian benchmark with known mutual information; writes CSV.
    BenchGaussian(BenchArgs),
    /// Print the statistics spec used for a given dimension.
    SpecDump(SpecDumpArgs),
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Delimited text file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// Force columns to categorical (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    /// Force columns to ordinal.
    #[arg(long, value_delimiter = ',')]
    pub ordinal: Vec<String>,
    /// Force columns to continuous.
    #[arg(long, value_delimiter = ',')]
    pub continuous: Vec<String>,
    /// Relative Gaussian jitter added to non-continuous columns before ranking;
    /// `--jitter` alone uses 1e-9.
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-9")]
    pub jitter: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Marginal moment order.
    #[arg(long, default_value_t = 2)]
    pub k: u32,
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    #[arg(long)]
    pub tol_g: Option<f64>,
    #[arg(long)]
    pub tol_z: Option<f64>,
    #[arg(long)]
    pub tol_h: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub mc_batch: Option<usize>,
    #[arg(long)]
    pub max_mc_batch: Option<usize>,
    /// auto, newton, lbfgs or sgd.
    #[arg(long, value_parser = snake_enum::<Method>)]
    pub method: Option<Method>,
    /// auto, uniform, halton, grid or gaussian.
    #[arg(long, value_parser = snake_enum::<Sampler>)]
    pub sampler: Option<Sampler>,
    #[arg(long, env = "MIND_SEED", default_value_t = 42)]
    pub seed: u64,
}

impl SolverArgs {
    pub fn resolve(&self) -> SolverOptions {
        let mut o = SolverOptions::default().with_seed(self.seed);
        if let Some(v) = self.tol_g {
            o.tol_g = v;
        }
        if let Some(v) = self.tol_z {
            o.tol_z = v;
        }
        if let Some(v) = self.tol_h {
            o.tol_h = v;
        }
        if let Some(v) = self.max_iters {
            o.max_iters = v;
        }
        if let Some(v) = self.mc_batch {
            o.mc_batch = v;
        }
        if let Some(v) = self.max_mc_batch {
            o.max_mc_batch = v;
        }
        if let Some(v) = self.method {
            o.method = v;
        }
        if let Some(v) = self.sampler {
            o.sampler = v;
        }
        o
    }
}

fn snake_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct EstimateMiArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// Target columns (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub target: Vec<String>,
    /// Feature columns; every other column when omitted.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Extra coordinate derived from a column: `abs:COL[:MU]`,
    /// `eps:COL:MU:EPSILON` or `periodic:COL:PERIOD`. `MU` may be `median`.
    #[arg(long)]
    pub augment: Vec<String>,
    #[arg(long, default_value_t = mind_core::mind::DEFAULT_WARM_START_TOLERANCE)]
    pub warm_start_tolerance: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Report path, `-` for standard output.
    #[arg(long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct CopulaEntropyArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// Columns to use; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Mutual information in nats.
    #[arg(long)]
    pub mi: f64,
    /// Target variance; enables the RMSE bound.
    #[arg(long)]
    pub var_y: Option<f64>,
    #[arg(long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Number of Gaussian pairs per side.
    #[arg(long)]
    pub dim: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    pub rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Seeds per configuration, counted up from `--seed`.
    #[arg(long, default_value_t = 1)]
    pub repeats: u64,
    #[arg(long, value_delimiter = ',', default_value = "mind,ksg")]
    pub estimators: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub ksg_neighbors: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct SpecDumpArgs {
    /// Dimension of a single block.
    #[arg(long, conflicts_with_all = ["dx", "dy"])]
    pub dim: Option<usize>,
    /// Joint spec for `dx` x-coordinates and `dy` y-coordinates.
    #[arg(long, requires = "dy")]
    pub dx: Option<usize>,
    #[arg(long, requires = "dx")]
    pub dy: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub k: u32,
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    #[arg(long, default_value = "-")]
    pub output: String,
}
