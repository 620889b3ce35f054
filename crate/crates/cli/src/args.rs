use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hierperc", version, about = "Long-range percolation on the hierarchical lattice")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one configuration and dump it (JSON) or its cluster-size histogram (CSV).
    Sample(Common),
    /// Estimate the susceptibility E|K_0| on Λ_n.
    Chi(Common),
    /// Estimate statistics of the largest cluster on Λ_n.
    Kmax(Common),
    /// Estimate φ_β(Λ_n).
    Phi(Common),
    /// Search for the correlation length n(β).
    Xi(Common),
    /// Estimate χ̂ over a grid of β values (CSV).
    Sweep(Common),
    /// Fit a sweep CSV.
    Fit(Common),
    /// Exact enumeration of a tiny block.
    Oracle(Common),
    /// Verify a property of the renormalization maps.
    RenormCheck(Common),
    /// Verify a step of the multi-scale induction.
    InductionCheck(Common),
    /// Print the renormalization parameter schedule.
    Schedule(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMode {
    Power,
    DoubleExp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RenormTest {
    PhiIdentity,
    PhiLaw,
    Sprinkle,
    PsiConnectivity,
    Domination,
    DctChain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InductionTest {
    Scale,
    Doubling,
    BaseCase,
}

/// Flags shared by every subcommand; each uses the subset it needs.
#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 1)]
    pub d: u32,
    #[arg(long = "L", default_value_t = 2)]
    pub side: u32,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Site density of the mixed model.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Block scale; for sweeps it overrides n(β).
    #[arg(long)]
    pub n: Option<u32>,
    /// Fixed trial count; without it trials adapt to --target-se.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long = "target-se", default_value_t = 0.01)]
    pub target_se: f64,
    #[arg(long = "max-trials", default_value_t = 1_000_000)]
    pub max_trials: u64,
    #[arg(long = "n-cap", default_value_t = 20)]
    pub n_cap: u32,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long)]
    pub k: Option<u32>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// start:stop:scale:count with scale `log` or `lin`.
    #[arg(long = "beta-grid")]
    pub beta_grid: Option<String>,
    /// Scales added to n(β) in sweeps.
    #[arg(long, default_value_t = 0)]
    pub margin: u32,
    #[arg(long, value_enum)]
    pub mode: Option<FitMode>,
    /// Input file for `fit`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long = "test")]
    pub renorm_test: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Number of induction steps for `induction-check --test scale`.
    #[arg(long)]
    pub ell: Option<u32>,
    /// Starting β for `renorm-check --test sprinkle`; defaults to β/2.
    #[arg(long = "beta-from")]
    pub beta_from: Option<f64>,
    /// Inner scale for `renorm-check --test dct-chain`.
    #[arg(long)]
    pub m: Option<u32>,
}
