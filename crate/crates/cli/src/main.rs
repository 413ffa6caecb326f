//! `cascade`: command-line front end for the cascade-model numerics.
//!
//! Exit status is 0 on success, 1 on a runtime or numerical failure and 2
//! on a usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "cascade", version, about = "Height recurrence, traveling waves and Monte Carlo for the continuum cascade model")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Directory for output files and their manifests.
    #[arg(long, global = true, env = "CASCADE_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for Monte Carlo; results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// TOML file of flag values; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterate the height-distribution recurrence.
    #[command(args_override_self = true)]
    Recur(RecurArgs),
    /// Front velocity, dispersion relation, profile and tail analysis.
    #[command(args_override_self = true)]
    Wave(WaveArgs),
    /// Sample continuum cascade trees.
    #[command(args_override_self = true)]
    Mc(McArgs),
    /// Sample discrete cascade graphs.
    #[command(args_override_self = true)]
    Discrete(DiscreteArgs),
    /// Size moments and the scaled size distribution.
    #[command(args_override_self = true)]
    Size(SizeArgs),
    /// Exact series expansion of P_n about x = 0.
    #[command(args_override_self = true)]
    Series(SeriesArgs),
}

/// Closed interval given as `lo,hi` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: FromStr + PartialOrd + Copy> FromStr for Window<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (lo, hi) = s
            .split_once(',')
            .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<T>().map_err(|_| format!("`{v}` is not a valid bound"));
        let (lo, hi) = (parse(lo)?, parse(hi)?);
        if !(lo < hi) {
            return Err(format!("window `{s}` must have lo < hi"));
        }
        Ok(Self { lo, hi })
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got `{s}`")),
    }
}

fn open_unit(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("expected a number in (0, 1), got `{s}`")),
    }
}

fn closed_unit(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("expected a number in [0, 1], got `{s}`")),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RecurArgs {
    /// Number of iterations.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=1_000_000))]
    pub n_max: u64,
    /// Grid spacing.
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    pub h: f64,
    /// Iterations whose profiles are written, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub store: Vec<u64>,
    /// Level defining the front position.
    #[arg(long, default_value_t = 0.5, value_parser = open_unit)]
    pub front_level: f64,
    /// Grid extent beyond x = n_max/e.
    #[arg(long, default_value_t = 40.0, value_parser = positive)]
    pub margin: f64,
    /// Points at which to report E[H(x)], comma separated.
    #[arg(long, value_delimiter = ',', value_parser = non_negative)]
    pub mean_height_at: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct WaveArgs {
    /// Number of recurrence iterations.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(10..=1_000_000))]
    pub n_max: u64,
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    pub h: f64,
    /// Iterations `lo,hi` used for the velocity fit [default: n_max/10,n_max].
    #[arg(long)]
    pub fit_window: Option<Window<u64>>,
    /// Fit x_f = v n + c0 without the logarithmic term.
    #[arg(long)]
    pub no_log: bool,
    /// Velocity at which to solve the dispersion relation.
    #[arg(long, value_parser = positive)]
    pub v: Option<f64>,
    /// Iteration whose profile is analysed [default: n_max].
    #[arg(long)]
    pub profile_n: Option<u64>,
    #[arg(long, default_value_t = 0.5, value_parser = open_unit)]
    pub front_level: f64,
    #[arg(long, default_value = "-20,20", allow_hyphen_values = true)]
    pub profile_window: Window<f64>,
    #[arg(long, default_value = "5,15", allow_hyphen_values = true)]
    pub ahead_window: Window<f64>,
    #[arg(long, default_value = "-5,-1.5", allow_hyphen_values = true)]
    pub behind_window: Window<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct McArgs {
    /// Interval length.
    #[arg(long, value_parser = non_negative)]
    pub x: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicates: u64,
    #[arg(long)]
    pub seed: u64,
    /// Abort if any tree exceeds this many vertices.
    #[arg(long, default_value_t = cascade_core::mc::DEFAULT_NODE_CAP, value_parser = clap::value_parser!(u64).range(1..))]
    pub node_cap: u64,
    /// Skip the per-tree CSV.
    #[arg(long)]
    pub no_samples: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DiscreteArgs {
    /// Highest vertex label; the graph has m + 1 vertices.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=1_000_000_000))]
    pub m: u64,
    /// Link probability.
    #[arg(long, value_parser = closed_unit)]
    pub c: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicates: u64,
    #[arg(long)]
    pub seed: u64,
    /// Skip the per-graph CSV.
    #[arg(long)]
    pub no_samples: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SizeArgs {
    #[arg(long, value_parser = non_negative)]
    pub x: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(200..))]
    pub replicates: u64,
    #[arg(long)]
    pub seed: u64,
    /// Highest moment order.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=5))]
    pub p_max: u32,
    #[arg(long, default_value_t = cascade_core::mc::DEFAULT_NODE_CAP, value_parser = clap::value_parser!(u64).range(1..))]
    pub node_cap: u64,
    /// Histogram bins for the scaled size σ = e^{-x} S.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..=1_000_000))]
    pub bins: u64,
    #[arg(long, default_value_t = 10.0, value_parser = positive)]
    pub sigma_max: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SeriesArgs {
    /// Iteration index.
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=200))]
    pub n: u64,
    /// Truncation order [default: n + 6].
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=400))]
    pub order: Option<u64>,
}

fn main() -> ExitCode {
    let args = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
