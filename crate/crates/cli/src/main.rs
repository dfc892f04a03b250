mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use chebtuck::newton::{Integration, DEFAULT_QUAD_M, DEFAULT_TAU_CUT};
use chebtuck::spline::InterpKind;
use clap::{Args, Parser, Subcommand};

/// Chebyshev-Tucker approximation of trivariate functions and
/// range-separated particle potentials.
#[derive(Parser)]
#[command(name = "chebtuck", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, validate and cache a Newton kernel.
    Kernel(KernelArgs),
    /// Middle-slice error and Tucker rank of the ChebTuck Newton kernel over (n, m).
    TableNewton(TableNewtonArgs),
    /// ChebTuck approximation of the long-range part of a particle potential.
    Potential(PotentialArgs),
    /// Wall-time sweep of the CP and grid construction paths over n.
    Scaling(ScalingArgs),
    /// Build a ChebTuck function from a named test function and save it.
    Build(BuildArgs),
    /// Evaluate a saved ChebTuck function at points.
    Eval(EvalArgs),
}

#[derive(Args, Clone)]
pub struct KernelOpts {
    /// Quadrature half-count M (rank up to 2M+1).
    #[arg(long = "quad-m", default_value_t = DEFAULT_QUAD_M, value_parser = positive_usize)]
    pub quad_m: usize,
    /// Cell integration: erf or midpoint.
    #[arg(long, default_value = "erf", value_parser = parse_integration)]
    pub integration: Integration,
    /// Directory for cached kernels.
    #[arg(long = "kernel-cache")]
    pub kernel_cache: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct RsOpts {
    /// Separation radius in cells (default: physical radius 0.35).
    #[arg(long, value_parser = positive_usize)]
    pub sigma: Option<usize>,
    #[arg(long = "tau-cut", default_value_t = DEFAULT_TAU_CUT, value_parser = positive_f64)]
    pub tau_cut: f64,
}

#[derive(Args, Clone)]
pub struct OutputOpts {
    /// CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit timing columns.
    #[arg(long = "no-timing")]
    pub no_timing: bool,
}

#[derive(Args)]
pub struct KernelArgs {
    #[arg(long, value_parser = grid_size)]
    pub n: usize,
    /// Build the 2n reference kernel instead.
    #[arg(long)]
    pub reference: bool,
    /// Maximal accepted oracle error.
    #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
    pub tol: f64,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Args)]
pub struct TableNewtonArgs {
    #[arg(long, value_delimiter = ',', default_value = "256", value_parser = grid_size)]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "129", value_parser = degree)]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 1e-7, value_parser = positive_f64)]
    pub eps: f64,
    /// Approximate the full kernel instead of its long-range part.
    #[arg(long = "no-rs")]
    pub no_rs: bool,
    #[arg(long, default_value = "spline", value_parser = parse_interp)]
    pub interp: InterpKind,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[command(flatten)]
    pub rs: RsOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Args, Clone)]
#[group(multiple = false)]
pub struct SourceOpts {
    /// Particle file: "x y z charge" per line.
    #[arg(long)]
    pub particles: Option<PathBuf>,
    /// Lattice L1xL2xL3 of unit charges.
    #[arg(long, value_parser = parse_lattice)]
    pub lattice: Option<[usize; 3]>,
    /// Synthetic cluster of N charges.
    #[arg(long, value_parser = positive_usize)]
    pub cluster: Option<usize>,
}

#[derive(Args)]
pub struct PotentialArgs {
    #[command(flatten)]
    pub source: SourceOpts,
    /// Use the first N particles of the source (list).
    #[arg(long, value_delimiter = ',', value_parser = positive_usize)]
    pub count: Vec<usize>,
    /// Lattice spacing (default 2/(max L + 1)).
    #[arg(long, value_parser = positive_f64)]
    pub spacing: Option<f64>,
    /// Random lattice vacancies.
    #[arg(long, default_value_t = 0)]
    pub vacancies: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_parser = grid_size)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "129", value_parser = degree)]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 1e-7, value_parser = positive_f64)]
    pub eps: f64,
    #[arg(long, value_delimiter = ',', default_value = "spline", value_parser = parse_interp)]
    pub interp: Vec<InterpKind>,
    /// Also compress the grid tensor directly (slow for large n).
    #[arg(long)]
    pub c2t: bool,
    /// Directory for middle-slice field dumps.
    #[arg(long)]
    pub slices: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[command(flatten)]
    pub rs: RsOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Algorithm {
    /// Lifting of the canonical input (fast path).
    Cp,
    /// Lifting of the full grid tensor.
    Grid,
    Both,
}

#[derive(Args)]
pub struct ScalingArgs {
    #[arg(long, value_enum, default_value = "cp")]
    pub alg: Algorithm,
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048", value_parser = grid_size)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 129, value_parser = degree)]
    pub m: usize,
    #[arg(long, default_value_t = 1e-6, value_parser = positive_f64)]
    pub eps: f64,
    /// Cluster size.
    #[arg(long = "cluster", default_value_t = 500, value_parser = positive_usize)]
    pub count: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Timed repetitions per size (minimum reported).
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    pub repeats: usize,
    #[command(flatten)]
    pub kernel: KernelOpts,
    #[command(flatten)]
    pub rs: RsOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TestFunction {
    /// x·y·z
    Xyz,
    /// exp(x+y+z)
    Exp,
    /// 1/(1+x²+y²+z²)
    Runge,
    /// 1/‖x − (1.5, 0, 0)‖
    Coulomb,
}

#[derive(Args)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub function: TestFunction,
    #[arg(long, default_value_t = 33, value_parser = degree)]
    pub m: usize,
    #[arg(long, default_value_t = 1e-8, value_parser = positive_f64)]
    pub eps: f64,
    /// Container file to write.
    #[arg(long)]
    pub save: PathBuf,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Container file holding a ChebTuck function.
    pub input: PathBuf,
    /// Point "x,y,z" (repeatable).
    #[arg(long = "point", value_parser = parse_point, required = true)]
    pub points: Vec<[f64; 3]>,
    #[command(flatten)]
    pub output: OutputOpts,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got '{s}'")),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got '{s}'")),
    }
}

fn grid_size(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 4 && v % 2 == 0 => Ok(v),
        _ => Err(format!("grid size must be an even integer >= 4, got '{s}'")),
    }
}

fn degree(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        _ => Err(format!("degree must be an integer >= 2, got '{s}'")),
    }
}

fn parse_integration(s: &str) -> Result<Integration, String> {
    s.parse().map_err(|e: chebtuck::Error| e.to_string())
}

fn parse_interp(s: &str) -> Result<InterpKind, String> {
    s.parse().map_err(|e: chebtuck::Error| e.to_string())
}

fn parse_lattice(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(['x', 'X'])
        .map(positive_usize)
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected L1xL2xL3, got '{s}'"))?;
    parts.try_into().map_err(|_| format!("expected L1xL2xL3, got '{s}'"))
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected x,y,z, got '{s}'"))?;
    parts.try_into().map_err(|_| format!("expected x,y,z, got '{s}'"))
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("CHEBTUCK_THREADS") {
        let k: usize = v
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| anyhow::anyhow!("CHEBTUCK_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> anyhow::Result<()> {
        configure_threads()?;
        match cli.command {
            Command::Kernel(a) => commands::kernel(&a),
            Command::TableNewton(a) => commands::table_newton(&a),
            Command::Potential(a) => commands::potential(&a),
            Command::Scaling(a) => commands::scaling(&a),
            Command::Build(a) => commands::build(&a),
            Command::Eval(a) => commands::eval(&a),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
