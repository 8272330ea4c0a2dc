//! Command-line front end: build problems from flags, run the solvers, and
//! write field snapshots, CSV diagnostics, and PGM heatmaps.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical/convergence error.

mod commands;
mod inputs;
mod outputs;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mixflow", version, about = "Density transport and mixing optimal control on the periodic 2D torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct GridArgs {
    /// Grid points per axis (power of two).
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Domain length in x.
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    pub lx: f64,
    /// Domain length in y.
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    pub ly: f64,
}

impl GridArgs {
    fn build(&self) -> mixflow::Result<mixflow::Grid> {
        mixflow::Grid::new(self.n, self.n, self.lx, self.ly)
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Sample a built-in field and write it as a snapshot file.
    MakeField(MakeFieldArgs),
    /// Integrate the continuity equation under a control.
    Transport(TransportArgs),
    /// Integrate the incompressible Euler equation.
    Euler(EulerArgs),
    /// Helmholtz-decompose a velocity field with respect to a weight.
    Decompose(DecomposeArgs),
    /// Solve the minimum-effort velocity selection problem.
    SelectVelocity(SelectVelocityArgs),
    /// Solve the penalized mixing problem by adjoint gradient descent.
    Mix(MixArgs),
    /// Estimate the optimal state-transfer cost by penalty continuation.
    Transfer(TransferArgs),
    /// Reparameterize a stored control onto a new horizon.
    Rescale(RescaleArgs),
    /// Evaluate trajectories and geodesic diagnostics for a stored control.
    Diagnose(DiagnoseArgs),
    /// Export a field snapshot as a binary PGM heatmap.
    ExportPgm(ExportPgmArgs),
}

#[derive(Args)]
pub struct MakeFieldArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Density preset (stripe, stripe-shifted:<a>, disk, uniform[:<v>],
    /// random) or, with --velocity, a velocity preset (taylor-green, shear,
    /// random, constant:<vx>,<vy>).
    #[arg(long)]
    pub kind: String,
    /// Interpret --kind as a velocity preset.
    #[arg(long, default_value_t = false)]
    pub velocity: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Velocity amplitude for velocity presets.
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Field name recorded in the snapshot header.
    #[arg(long, default_value = "field")]
    pub name: String,
    /// Output snapshot path (.fld).
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args)]
pub struct TransportArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Initial density (preset or .fld path).
    #[arg(long)]
    pub rho: String,
    /// Control: a stored control directory or a steady velocity preset.
    #[arg(long)]
    pub control: String,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    /// Store every stride-th step.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Integrate the time-reversed system.
    #[arg(long, default_value_t = false)]
    pub backward: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Output directory.
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args)]
pub struct EulerArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Initial velocity (preset or .fld path).
    #[arg(long)]
    pub init: String,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Velocity field to decompose (preset or .fld path).
    #[arg(long)]
    pub v: String,
    /// Weight density (preset or .fld path).
    #[arg(long, default_value = "uniform")]
    pub mu: String,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args)]
pub struct SelectVelocityArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Density (preset or .fld path).
    #[arg(long)]
    pub rho: String,
    /// Tangent field tau as a .fld path.
    #[arg(long)]
    pub tau: Option<String>,
    /// Alternatively, generate tau = -div(rho v) from a velocity preset.
    #[arg(long)]
    pub tau_from_velocity: Option<String>,
    /// Effort norm: l2, h1, enstrophy, palenstrophy.
    #[arg(long, default_value = "l2")]
    pub norm: String,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args)]
pub struct MixArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Initial density (preset or .fld path).
    #[arg(long)]
    pub rho_i: String,
    /// Target density; defaults to the uniform density of matching mass.
    #[arg(long)]
    pub rho_star: Option<String>,
    /// Rescale the target to match the initial mass exactly.
    #[arg(long, default_value_t = false)]
    pub match_mass: bool,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Control intervals (nodes - 1).
    #[arg(long, default_value_t = 16)]
    pub nt: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, default_value = "l2")]
    pub norm: String,
    /// Mixedness metric: l2, hneg, hneg:<s>.
    #[arg(long, default_value = "hneg")]
    pub metric: String,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub rho_i: String,
    #[arg(long)]
    pub rho_f: String,
    #[arg(long, default_value_t = 8)]
    pub nt: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, default_value = "l2")]
    pub norm: String,
    #[arg(long, default_value = "hneg")]
    pub metric: String,
    /// First penalty weight of the continuation schedule.
    #[arg(long, default_value_t = 10.0)]
    pub alpha0: f64,
    /// Continuation stages (alpha0 * 10^k).
    #[arg(long, default_value_t = 4)]
    pub stages: usize,
    /// Endpoint-gap tolerance in the chosen metric.
    #[arg(long, default_value_t = 0.05)]
    pub gap_tol: f64,
    /// Reachability pre-check tolerance; default scales with one histogram
    /// bin of mass.
    #[arg(long)]
    pub reach_tol: Option<f64>,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    /// Proceed even if the reachability necessary condition fails.
    #[arg(long, default_value_t = false)]
    pub force: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args)]
pub struct RescaleArgs {
    /// Stored control directory.
    #[arg(long)]
    pub control: std::path::PathBuf,
    /// New horizon for the linear reparameterization.
    #[arg(long)]
    pub new_horizon: f64,
    /// Norm used for the effort report.
    #[arg(long, default_value = "l2")]
    pub norm: String,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Stored control directory.
    #[arg(long)]
    pub control: std::path::PathBuf,
    #[arg(long)]
    pub rho_i: String,
    /// Target for the stationarity diagnostics (defaults to the uniform
    /// density of matching mass).
    #[arg(long)]
    pub rho_star: Option<String>,
    /// Penalty weight entering the costate terminal condition.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value = "l2")]
    pub norm: String,
    #[arg(long, default_value = "hneg")]
    pub metric: String,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args)]
pub struct ExportPgmArgs {
    /// Input snapshot (.fld).
    #[arg(long)]
    pub field: std::path::PathBuf,
    /// Component for vector fields: x, y, or magnitude.
    #[arg(long, default_value = "magnitude")]
    pub component: String,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

fn exit_code(e: &mixflow::Error) -> i32 {
    use mixflow::Error;
    match e {
        Error::Config(_) | Error::Format(_) | Error::GridMismatch { .. } | Error::Io(_) => 1,
        _ => 2,
    }
}

pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(run(&argv));
}
