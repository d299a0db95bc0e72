use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdg_kdv::stepper::TimeScheme;
use hdg_kdv_cli::config::{parse_levels, parse_scheme, RunConfig};
use hdg_kdv_cli::{CliError, ConvergenceArgs, Outcome, SolitonArgs};

/// HDG solver for u_t + u_xxx + (beta u^m)_x = f in one space dimension.
#[derive(Debug, Parser)]
#[command(name = "hdg-kdv", version)]
struct Cli {
    /// Log progress (repeat for more detail); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Exit with status 4 if a reported threshold fails.
    #[arg(long, global = true)]
    assert: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convergence table of experiment 1 (linear) or 2 (nonlinear).
    Convergence {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        experiment: u32,
        #[arg(long)]
        k: usize,
        /// Inclusive level range `n0..n1`.
        #[arg(long, value_parser = |s: &str| parse_levels(s).map(LevelRange))]
        levels: Option<LevelRange>,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<TimeScheme>,
        /// Fixed time step instead of the mesh-dependent rule.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single solitary wave (experiment 3).
    Soliton {
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interaction of two solitary waves (experiment 4).
    TwoSoliton {
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run described by a TOML config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Report which admissibility conditions the trace constants satisfy.
    CheckTau {
        /// tau_qu+ tau_pu+ tau_qu- tau_qp-
        #[arg(long, num_args = 4, allow_negative_numbers = true, value_names = ["QU+", "PU+", "QU-", "QP-"])]
        tau: Vec<f64>,
        /// Lower bound on tau_F - tilde_tau for the nonlinear condition.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        delta: f64,
    },
    /// Projection error study for smooth data.
    ProjectionTest {
        #[arg(long)]
        k: usize,
        #[arg(long, num_args = 4, allow_negative_numbers = true, default_values_t = [0.0, -1.0, 1.0, 1.0])]
        tau: Vec<f64>,
    },
}

/// Inclusive refinement levels parsed from `n0..n1`.
#[derive(Debug, Clone)]
struct LevelRange(Vec<u32>);

fn tau4(v: &[f64]) -> [f64; 4] {
    [v[0], v[1], v[2], v[3]]
}

fn dispatch(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Convergence { experiment, k, levels, scheme, dt, out } => {
            let levels = levels.map(|l| l.0);
            hdg_kdv_cli::convergence(&ConvergenceArgs { experiment, k, levels, scheme, dt, out })
        }
        Command::Soliton { n, k, dt, out } => hdg_kdv_cli::soliton(&SolitonArgs { num_elements: n, k, dt, out }),
        Command::TwoSoliton { n, k, dt, out } => {
            hdg_kdv_cli::two_soliton(&SolitonArgs { num_elements: n, k, dt, out })
        }
        Command::Run { config } => hdg_kdv_cli::run_config(&RunConfig::from_file(&config)?),
        Command::CheckTau { tau, delta } => Ok(hdg_kdv_cli::check_tau(tau4(&tau), delta)),
        Command::ProjectionTest { k, tau } => hdg_kdv_cli::projection_test(k, tau4(&tau)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.report.render());
            if cli.assert && !outcome.passed() {
                eprintln!("threshold check failed");
                return ExitCode::from(4);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
