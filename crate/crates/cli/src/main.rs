mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "qttosc", version, about = "Precompute QTT prototype tables and evaluate oscillatory integrals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a prototype table and write it as a QTTP file.
    Precompute(PrecomputeArgs),
    /// Evaluate integrals from a table at one or many frequencies.
    Integrate(IntegrateArgs),
    /// Error of the degree-N approximation against brute-force quadrature.
    Convergence(ConvergenceArgs),
    /// Effective QTT ranks for a list of prototypes.
    Ranks(RanksArgs),
    /// Re-run a recorded command and compare its outputs.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Phase,
    Kernel,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum BasisArg {
    Cheb,
    Lagr,
    LagrMulti,
}

#[derive(Args, Debug, Serialize)]
pub struct PrecomputeArgs {
    /// Oscillator: a phase g(x) or, with --kind kernel, h(w, x).
    #[arg(long, allow_hyphen_values = true)]
    pub osc: String,
    #[arg(long, value_enum, default_value_t = KindArg::Phase)]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value_t = BasisArg::Cheb)]
    pub basis: BasisArg,
    /// Polynomial degree N.
    #[arg(long = "N")]
    pub n: usize,
    /// Dimension of a lagr-multi basis.
    #[arg(long = "d")]
    pub d: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub wmin: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub wmax: f64,
    /// Grid has 2^L points.
    #[arg(long = "L")]
    pub l: usize,
    #[arg(long, default_value_t = 1e-11)]
    pub eps_cross: f64,
    #[arg(long, default_value_t = 48)]
    pub max_rank: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Reject grids whose rounding error could exceed this value.
    #[arg(long)]
    pub rounding_target: Option<f64>,
    /// Output table; relative paths go under $QTTOSC_TABLE_DIR when set.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Fixed subdivision into ceil(wmax) subintervals of 8 points.
    #[arg(long)]
    pub paper_quad: bool,
    /// Per-entry statistics CSV (default: stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct IntegrateArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Smooth factor f(x) (x1..xd for multi-index tables).
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub f: String,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "omega_list", conflicts_with = "omega_list")]
    pub omega: Option<f64>,
    /// File with one frequency per line.
    #[arg(long)]
    pub omega_list: Option<PathBuf>,
    /// Interpolation degree below the table's N (Chebyshev tables).
    #[arg(long)]
    pub degree: Option<usize>,
    /// Fourier transform of f over [A, B]; needs a table for g(x) = -x.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_hyphen_values = true)]
    pub fourier: Option<Vec<f64>>,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ConvergenceArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub osc: String,
    #[arg(long, value_enum, default_value_t = KindArg::Phase)]
    pub kind: KindArg,
    #[arg(long, allow_hyphen_values = true)]
    pub f: String,
    /// Comma-separated frequencies.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub omegas: Vec<f64>,
    #[arg(long = "Nmax")]
    pub nmax: usize,
    #[arg(long = "Nmin", default_value_t = 0)]
    pub nmin: usize,
    #[arg(long = "L", default_value_t = 20)]
    pub l: usize,
    #[arg(long, default_value_t = 1e-13)]
    pub eps_cross: f64,
    #[arg(long, default_value_t = 48)]
    pub max_rank: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct RanksArgs {
    /// CSV with columns osc,kind,k,part,wmin,wmax,L,eps_cross (kind, part
    /// and eps_cross may be empty).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 48)]
    pub max_rank: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    #[arg(long)]
    pub paper_quad: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the regenerated outputs.
    #[arg(long)]
    pub into: PathBuf,
}

/// Outcome of a successful command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Results were produced but some are numerically flagged.
    Flagged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(cli.command, &argv) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Flagged) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
