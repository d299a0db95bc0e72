//! Drivers behind the `hdg-kdv` command line: the reproduction presets, config-file runs,
//! the parameter checker and the projection study, with CSV and report output.

pub mod config;
pub mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hdg_kdv::experiments::{
    overlap_times, run_convergence, run_experiment_1, run_experiment_2, run_time_series, ConvergenceConfig, DtRule,
    TimeSeriesConfig, TimeSeriesRun,
};
use hdg_kdv::mesh::Mesh;
use hdg_kdv::polybasis::ReferenceBasis;
use hdg_kdv::problems;
use hdg_kdv::stepper::TimeScheme;
use hdg_kdv::verify::{self, ExperimentReport};
use hdg_kdv::{check_stability_conditions, HdgError, StabilizationParams};
use log::info;
use thiserror::Error;

use config::{RunConfig, RunKind};
use output::Report;

/// Margin over `k` required of the finest-level orders.
pub const ORDER_MARGIN: f64 = 0.8;
/// Orders accepted for `k = 0` at the finest two levels.
pub const K0_ORDER_RANGE: (f64, f64) = (0.7, 1.3);
/// Relative final-time error accepted for the single soliton.
pub const SOLITON_REL_TOL: f64 = 0.01;
/// Window in which the two-soliton overlap must be detected.
pub const OVERLAP_WINDOW: (f64, f64) = (0.4, 0.6);

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] HdgError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit code: 2 for configuration and output problems, 3 for solver failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 3,
            _ => 2,
        }
    }
}

/// Result of a command: its report and whether every threshold held.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.report.all_pass()
    }
}

fn prepare_dir(dir: Option<&Path>) -> Result<Option<PathBuf>, CliError> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", d.display())))?;
            Ok(Some(d.to_path_buf()))
        }
        None => Ok(None),
    }
}

fn describe_params(p: &StabilizationParams) -> String {
    format!(
        "({}, {}, {}, {}), tau_F = {:?}",
        p.tau_qu_plus, p.tau_pu_plus, p.tau_qu_minus, p.tau_qp_minus, p.tau_f
    )
}

fn newton_range(counts: impl IntoIterator<Item = (usize, usize)>) -> (usize, usize) {
    counts.into_iter().fold(None, |acc, (a, b)| match acc {
        None => Some((a, b)),
        Some((lo, hi)) => Some((a.min(lo), b.max(hi))),
    })
    .unwrap_or((0, 0))
}

/// Threshold checks on a convergence table.
fn convergence_checks(report: &ExperimentReport, out: &mut Report) {
    let k = report.k;
    let Some(f) = report.finest() else { return };
    if report.levels.len() < 2 {
        return;
    }
    if k == 0 {
        let tail = &report.levels[report.levels.len().saturating_sub(2).max(1)..];
        let orders: Vec<f64> =
            tail.iter().flat_map(|l| [l.order_u, l.order_q, l.order_p]).map(|o| o.unwrap_or(f64::NAN)).collect();
        let ok = orders.iter().all(|o| (K0_ORDER_RANGE.0..=K0_ORDER_RANGE.1).contains(o));
        out.check("k=0 orders", ok, format!("{orders:.2?} within [{}, {}]", K0_ORDER_RANGE.0, K0_ORDER_RANGE.1));
    } else {
        let orders = [f.order_u, f.order_q, f.order_p].map(|o| o.unwrap_or(f64::NAN));
        let ok = orders.iter().all(|o| *o >= k as f64 + ORDER_MARGIN);
        out.check(
            "finest-level orders",
            ok,
            format!("u {:.2}, q {:.2}, p {:.2} (need >= {:.1})", orders[0], orders[1], orders[2], k as f64 + ORDER_MARGIN),
        );
    }
}

fn finish_convergence(report: ExperimentReport, mut out: Report, dir: Option<&Path>) -> Result<Outcome, CliError> {
    let (lo, hi) = newton_range(report.levels.iter().map(|l| (l.min_newton, l.max_newton)));
    out.body = format!("{}newton iterations per step: {lo}..{hi}\n", report.format_table());
    convergence_checks(&report, &mut out);
    if let Some(d) = prepare_dir(dir)? {
        output::write_errors(&d, &report)?;
        out.write(&d)?;
    }
    Ok(Outcome { report: out })
}

/// Options of the `convergence` command.
#[derive(Debug, Clone)]
pub struct ConvergenceArgs {
    pub experiment: u32,
    pub k: usize,
    pub levels: Option<Vec<u32>>,
    pub scheme: Option<TimeScheme>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn convergence(args: &ConvergenceArgs) -> Result<Outcome, CliError> {
    let mut cfg = match args.experiment {
        1 => ConvergenceConfig::experiment_1(args.k),
        2 => ConvergenceConfig::experiment_2(args.k),
        other => return Err(CliError::Config(format!("`--experiment`: expected 1 or 2, got {other}"))),
    };
    if let Some(l) = &args.levels {
        cfg.levels = l.clone();
    }
    if let Some(s) = args.scheme {
        cfg.scheme = s;
    }
    if let Some(dt) = args.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Config("`--dt`: must be positive".into()));
        }
        cfg.dt_rule = DtRule::Fixed(dt);
    }
    let mut out = Report::default();
    out.set("experiment", args.experiment);
    out.set("k", cfg.k);
    out.set("levels", format!("{:?}", cfg.levels));
    out.set("scheme", format!("{:?}", cfg.scheme));
    out.set("dt", cfg.dt_rule.describe());
    out.set("tau", describe_params(&cfg.params));
    out.set("final_time", cfg.final_time);
    out.set("init", format!("{:?}", cfg.init));
    info!("running experiment {} with k = {}", args.experiment, cfg.k);
    let report = if args.experiment == 1 { run_experiment_1(&cfg)? } else { run_experiment_2(&cfg)? };
    finish_convergence(report, out, args.out.as_deref())
}

/// Options of the `soliton` and `two-soliton` commands.
#[derive(Debug, Clone)]
pub struct SolitonArgs {
    pub num_elements: Option<usize>,
    pub k: Option<usize>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
}

fn time_series_body(run: &TimeSeriesRun) -> String {
    let (lo, hi) = newton_range(run.newton_counts.iter().map(|&n| (n, n)));
    let mut s = format!("steps: {}\ndt: {:e}\nnewton iterations per step: {lo}..{hi}\n", run.steps, run.dt);
    if let Some(e) = run.errors {
        let _ = writeln!(s, "final errors: e_u {:.3e}, e_q {:.3e}, e_p {:.3e}, relative u {:.3e}", e.e_u, e.e_q, e.e_p, e.rel_u);
    }
    s
}

fn finish_time_series(run: &TimeSeriesRun, out: &mut Report, dir: Option<&Path>) -> Result<(), CliError> {
    out.body.insert_str(0, &time_series_body(run));
    if let Some(d) = prepare_dir(dir)? {
        output::write_energy(&d, &run.energy)?;
        output::write_snapshots(&d, &run.snapshots)?;
        out.write(&d)?;
    }
    Ok(())
}

fn soliton_config(base: TimeSeriesConfig, args: &SolitonArgs) -> Result<TimeSeriesConfig, CliError> {
    let mut cfg = base;
    if let Some(n) = args.num_elements {
        cfg.num_elements = n;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(dt) = args.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Config("`--dt`: must be positive".into()));
        }
        cfg.dt = dt;
    }
    // keep roughly one snapshot per 0.02 time units
    cfg.snapshot_stride = ((0.02 / cfg.dt).round() as usize).max(1);
    Ok(cfg)
}

fn echo_series(out: &mut Report, name: &str, cfg: &TimeSeriesConfig) {
    out.set("problem", name);
    out.set("num_elements", cfg.num_elements);
    out.set("k", cfg.k);
    out.set("dt", cfg.dt);
    out.set("final_time", cfg.final_time);
    out.set("scheme", format!("{:?}", cfg.scheme));
    out.set("tau", describe_params(&cfg.params));
    out.set("init", format!("{:?}", cfg.init));
    out.set("snapshot_stride", cfg.snapshot_stride);
}

pub fn soliton(args: &SolitonArgs) -> Result<Outcome, CliError> {
    let cfg = soliton_config(TimeSeriesConfig::experiment_3(), args)?;
    let mut out = Report::default();
    echo_series(&mut out, "soliton", &cfg);
    let run = run_time_series(&problems::soliton_problem(), &cfg)?;
    let rel = run.errors.map(|e| e.rel_u).unwrap_or(f64::NAN);
    out.check("relative final error", rel < SOLITON_REL_TOL, format!("{rel:.3e} (need < {SOLITON_REL_TOL})"));
    finish_time_series(&run, &mut out, args.out.as_deref())?;
    Ok(Outcome { report: out })
}

pub fn two_soliton(args: &SolitonArgs) -> Result<Outcome, CliError> {
    let cfg = soliton_config(TimeSeriesConfig::experiment_4(), args)?;
    let mut out = Report::default();
    echo_series(&mut out, "two_soliton", &cfg);
    let run = run_time_series(&problems::two_soliton_problem(), &cfg)?;
    let overlaps = overlap_times(&run.snapshots);
    let near = overlaps.iter().any(|t| (OVERLAP_WINDOW.0..=OVERLAP_WINDOW.1).contains(t));
    out.body = format!("overlap times: {overlaps:.3?}\n");
    out.check(
        "overlap",
        near,
        format!("detected at {overlaps:.3?}, need one in [{}, {}]", OVERLAP_WINDOW.0, OVERLAP_WINDOW.1),
    );
    finish_time_series(&run, &mut out, args.out.as_deref())?;
    Ok(Outcome { report: out })
}

/// Runs a config file: a convergence study if it lists `levels`, a single time series otherwise.
pub fn run_config(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let problem = cfg.problem_spec()?;
    let params = cfg.params()?;
    let scheme = cfg.scheme()?;
    let init = cfg.init_mode()?;
    let dt_rule = cfg.dt_rule()?;
    let k = cfg.discretization.k;
    let mut out = Report::default();
    out.set("problem", &cfg.problem.name);
    out.set("interval", format!("({}, {})", problem.a, problem.b));
    out.set("flux", format!("{} u^{}", problem.flux.beta, problem.flux.m));
    out.set("k", k);
    out.set("scheme", format!("{scheme:?}"));
    out.set("dt", dt_rule.describe());
    out.set("final_time", cfg.time.final_time);
    out.set("tau", describe_params(&params));
    out.set("init", format!("{init:?}"));
    if problem.flux.is_linear() {
        info!("flux is linear: Newton should take one iteration per stage");
    }
    let dir = Some(cfg.output.dir.as_path());
    match cfg.kind() {
        RunKind::Convergence(levels) => {
            out.set("levels", format!("{levels:?}"));
            let meshes = levels
                .iter()
                .map(|&n| Ok((n, Mesh::uniform(problem.a, problem.b, 1usize << n)?)))
                .collect::<Result<Vec<_>, HdgError>>()?;
            let conv = ConvergenceConfig {
                k,
                levels,
                scheme,
                dt_rule,
                params,
                final_time: cfg.time.final_time,
                init,
                newton: cfg.newton(),
            };
            let report = run_convergence(&problem, meshes, &conv)?;
            finish_convergence(report, out, dir)
        }
        RunKind::TimeSeries(n) => {
            let h = (problem.b - problem.a) / n as f64;
            let ts = TimeSeriesConfig {
                num_elements: n,
                k,
                dt: dt_rule.dt(h, k),
                final_time: cfg.time.final_time,
                scheme,
                params,
                init,
                newton: cfg.newton(),
                snapshot_stride: cfg.output.snapshot_stride,
            };
            out.set("num_elements", n);
            out.set("snapshot_stride", ts.snapshot_stride);
            let run = run_time_series(&problem, &ts)?;
            finish_time_series(&run, &mut out, dir)?;
            Ok(Outcome { report: out })
        }
    }
}

/// The four admissibility predicates.
pub fn check_tau(tau: [f64; 4], delta: f64) -> Outcome {
    let params = StabilizationParams::new(tau[0], tau[1], tau[2], tau[3]);
    let r = check_stability_conditions(&params, delta);
    let mut out = Report::default();
    out.set("tau", format!("{tau:?}"));
    out.set("delta", delta);
    out.body = format!("tau_qu+ + tau_qu- - tau_pu+ tau_qp- = {}\n", params.projection_determinant());
    out.check("ntau_cond (nonlinear stability)", r.satisfies_ntau_cond, format!("delta = {delta}"));
    out.check("tau_cond (stability for F = 0)", r.satisfies_tau_cond, String::new());
    out.check("tau_cond_new (optimal linear convergence)", r.satisfies_tau_cond_new, String::new());
    out.check("cond_tau (projection well posed)", r.satisfies_cond_tau, String::new());
    Outcome { report: out }
}

/// Projection errors for `(sin, cos, -sin)` on `(0, 1)` with `2^n` elements, `n = 1..=5`.
pub fn projection_test(k: usize, tau: [f64; 4]) -> Result<Outcome, CliError> {
    let params = StabilizationParams::new(tau[0], tau[1], tau[2], tau[3]);
    let basis = ReferenceBasis::new(k, k + 4)?;
    let load = basis.elevated(3);
    let mut errs = [vec![], vec![], vec![]];
    let mut hs = vec![];
    let mut body = format!("{:>6} {:>10} {:>10} {:>10} {:>10}\n", "level", "h", "e_u", "e_q", "e_p");
    for n in 1..=5u32 {
        let mesh = Mesh::uniform(0.0, 1.0, 1 << n)?;
        let proj =
            verify::hdg_projection_mesh(&mesh, &basis, &|x: f64| x.sin(), &|x: f64| x.cos(), &|x: f64| -x.sin(), &params)?;
        let pick = |f: fn(&verify::ProjectionResult) -> &Vec<f64>| proj.iter().map(|r| f(r).clone()).collect::<Vec<_>>();
        let e = [
            verify::l2_error(&pick(|r| &r.u), &|x| x.sin(), &mesh, &load),
            verify::l2_error(&pick(|r| &r.q), &|x| x.cos(), &mesh, &load),
            verify::l2_error(&pick(|r| &r.p), &|x| -x.sin(), &mesh, &load),
        ];
        let _ = writeln!(body, "{:>6} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}", n, mesh.h_max(), e[0], e[1], e[2]);
        for (v, x) in errs.iter_mut().zip(e) {
            v.push(x);
        }
        hs.push(mesh.h_max());
    }
    let orders: Vec<f64> = errs.iter().map(|e| *verify::eoc(e, &hs).unwrap().last().unwrap()).collect();
    let mut out = Report::default();
    out.set("k", k);
    out.set("tau", format!("{tau:?}"));
    out.body = body;
    out.check(
        "projection orders",
        orders.iter().all(|o| *o >= k as f64 + ORDER_MARGIN),
        format!("u {:.2}, q {:.2}, p {:.2} (need >= {:.1})", orders[0], orders[1], orders[2], k as f64 + ORDER_MARGIN),
    );
    Ok(Outcome { report: out })
}
