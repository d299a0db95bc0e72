//! Drivers for the convergence studies and the soliton runs.

use log::{debug, info};

use crate::error::{HdgError, Result};
use crate::flux::{StabilizationParams, TauFRule};
use crate::mesh::Mesh;
use crate::problems;
use crate::stepper::{HdgSolver, InitMode, NewtonSettings, ProblemSpec, SolutionState, TimeScheme};
use crate::verify::{self, ExperimentReport, LevelRecord};

/// Time step as a function of the mesh size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    Fixed(f64),
    /// `c h^2`
    H2(f64),
    /// `c h^3`
    H3(f64),
    /// `0.1 h^2` for `k <= 1`, `0.1 h^3` otherwise.
    Preset,
}

impl DtRule {
    pub fn dt(&self, h: f64, k: usize) -> f64 {
        match *self {
            DtRule::Fixed(v) => v,
            DtRule::H2(c) => c * h * h,
            DtRule::H3(c) => c * h * h * h,
            DtRule::Preset if k <= 1 => 0.1 * h * h,
            DtRule::Preset => 0.1 * h * h * h,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DtRule::Fixed(v) => format!("{v}"),
            DtRule::H2(c) => format!("{c}*h^2"),
            DtRule::H3(c) => format!("{c}*h^3"),
            DtRule::Preset => "0.1*h^2 (k<=1), 0.1*h^3 (k>=2)".into(),
        }
    }
}

/// Number of uniform steps covering `[0, t_final]` with step at most `dt_max`, and the
/// adjusted step.
pub fn step_count(t_final: f64, dt_max: f64) -> Result<(usize, f64)> {
    if !(dt_max > 0.0) {
        return Err(HdgError::NonPositiveTimeStep(dt_max));
    }
    if !(t_final > 0.0) {
        return Err(HdgError::InvalidInput(format!("final time must be positive, got {t_final}")));
    }
    let n = (t_final / dt_max - 1e-9).ceil().max(1.0) as usize;
    Ok((n, t_final / n as f64))
}

/// Settings of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub k: usize,
    /// Refinement levels `n`, with `h ~ 2^-n`.
    pub levels: Vec<u32>,
    pub scheme: TimeScheme,
    pub dt_rule: DtRule,
    pub params: StabilizationParams,
    pub final_time: f64,
    pub init: InitMode,
    pub newton: NewtonSettings,
}

impl ConvergenceConfig {
    pub fn experiment_1(k: usize) -> Self {
        Self {
            k,
            levels: (1..=5).collect(),
            scheme: TimeScheme::Midpoint,
            dt_rule: DtRule::Preset,
            params: StabilizationParams::reference(),
            final_time: 0.1,
            init: InitMode::StageStationary,
            newton: NewtonSettings::default(),
        }
    }

    pub fn experiment_2(k: usize) -> Self {
        Self {
            levels: (3..=7).collect(),
            params: StabilizationParams::reference().with_tau_f(TauFRule::Constant(3.0)),
            ..Self::experiment_1(k)
        }
    }
}

/// Outcome of one time integration with an exact solution at hand.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub state: SolutionState,
    pub prev_u: Vec<Vec<f64>>,
    pub dt: f64,
    pub steps: usize,
    pub newton_counts: Vec<usize>,
    pub init_iterations: usize,
}

/// Integrates `steps` steps from the initial state and keeps the last two levels.
pub fn integrate_problem(
    solver: &HdgSolver,
    scheme: TimeScheme,
    init: InitMode,
    t_final: f64,
    dt_max: f64,
    mut observe: impl FnMut(&SolutionState),
) -> Result<RunSummary> {
    let (steps, dt) = step_count(t_final, dt_max)?;
    let (state0, tr0) = solver.initial_state_for_step(init, scheme, dt)?;
    observe(&state0);
    let mut prev_u = state0.u_coeffs();
    let mut counts = Vec::with_capacity(steps);
    let mut last = state0.u_coeffs();
    let state = solver.integrate(state0, scheme, dt, steps, |s, tr| {
        counts.push(tr.iterations());
        prev_u = std::mem::replace(&mut last, s.u_coeffs());
        observe(s);
    })?;
    Ok(RunSummary { state, prev_u, dt, steps, newton_counts: counts, init_iterations: tr0.iterations() })
}

/// Convergence study of `problem` over the given `(level, mesh)` pairs, with errors
/// measured against `problem.exact` at `cfg.final_time`.
pub fn run_convergence(problem: &ProblemSpec, meshes: Vec<(u32, Mesh)>, cfg: &ConvergenceConfig) -> Result<ExperimentReport> {
    let exact = problem.exact.clone().ok_or_else(|| HdgError::InvalidInput("convergence study needs an exact solution".into()))?;
    let mut report = ExperimentReport {
        k: cfg.k,
        params: cfg.params,
        dt_rule: cfg.dt_rule.describe(),
        scheme: cfg.scheme,
        final_time: cfg.final_time,
        levels: Vec::new(),
    };
    for (level, mesh) in meshes {
        let h = mesh.h_max();
        let n = mesh.num_elements();
        let solver = HdgSolver::new(mesh, cfg.k, cfg.params, problem.clone(), cfg.newton)?;
        let dt_max = cfg.dt_rule.dt(h, cfg.k);
        let run = integrate_problem(&solver, cfg.scheme, cfg.init, cfg.final_time, dt_max, |_| {})?;
        let t = cfg.final_time;
        let lb = &solver.load_basis;
        let m = &solver.mesh;
        let field = |sel: fn(&crate::stepper::ElementFields) -> &Vec<f64>| -> Vec<Vec<f64>> {
            run.state.fields.iter().map(|f| sel(f).clone()).collect()
        };
        let e_u = verify::l2_error(&field(|f| &f.u), &|x| (exact.u)(x, t), m, lb);
        let e_q = verify::l2_error(&field(|f| &f.q), &|x| (exact.q)(x, t), m, lb);
        let e_p = verify::l2_error(&field(|f| &f.p), &|x| (exact.p)(x, t), m, lb);
        // difference quotient of the last step against u_t at the step midpoint
        let e_ut = exact.u_t.as_ref().map(|ut| {
            let dq = verify::difference_quotient(&run.state.u_coeffs(), &run.prev_u, run.dt);
            let tm = t - 0.5 * run.dt;
            verify::l2_error(&dq, &|x| ut(x, tm), m, lb)
        });
        let max_newton = run.newton_counts.iter().copied().max().unwrap_or(0);
        let min_newton = run.newton_counts.iter().copied().min().unwrap_or(0);
        info!(
            "k={} level={} N={} dt={:.3e} steps={} e_u={:.3e} e_q={:.3e} e_p={:.3e} newton {}..{}",
            cfg.k, level, n, run.dt, run.steps, e_u, e_q, e_p, min_newton, max_newton
        );
        report.levels.push(LevelRecord {
            level,
            num_elements: n,
            h,
            dt: run.dt,
            e_u,
            e_q,
            e_p,
            e_ut,
            order_u: None,
            order_q: None,
            order_p: None,
            order_ut: None,
            min_newton,
            max_newton,
        });
    }
    report.compute_orders();
    Ok(report)
}

/// `u = sin(x + t)` on `(0, 1)` with `h = 2^-n`.
pub fn run_experiment_1(cfg: &ConvergenceConfig) -> Result<ExperimentReport> {
    let problem = problems::linear_trig_problem();
    let meshes = cfg
        .levels
        .iter()
        .map(|&n| Ok((n, Mesh::uniform(0.0, 1.0, 1usize << n)?)))
        .collect::<Result<Vec<_>>>()?;
    run_convergence(&problem, meshes, cfg)
}

/// Number of elements of `(0, pi)` for level `n`: `2^n`, so that `h = pi 2^-n`.
pub fn experiment_2_elements(n: u32) -> usize {
    1usize << n
}

/// `u = sin(2x + t)` on `(0, pi)` with `F = 3u^2` and `2^n` elements.
pub fn run_experiment_2(cfg: &ConvergenceConfig) -> Result<ExperimentReport> {
    let problem = problems::nonlinear_trig_problem();
    let meshes = cfg
        .levels
        .iter()
        .map(|&n| Ok((n, Mesh::uniform(0.0, std::f64::consts::PI, experiment_2_elements(n))?)))
        .collect::<Result<Vec<_>>>()?;
    run_convergence(&problem, meshes, cfg)
}

/// Settings of a single long run with snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesConfig {
    pub num_elements: usize,
    pub k: usize,
    pub dt: f64,
    pub final_time: f64,
    pub scheme: TimeScheme,
    pub params: StabilizationParams,
    pub init: InitMode,
    pub newton: NewtonSettings,
    /// Keep every `stride`-th step (the initial and final states are always kept).
    pub snapshot_stride: usize,
}

impl TimeSeriesConfig {
    pub fn experiment_3() -> Self {
        Self {
            num_elements: 100,
            k: 3,
            dt: 1e-3,
            final_time: 2.0,
            scheme: TimeScheme::Midpoint,
            params: StabilizationParams::reference().with_tau_f(TauFRule::DerivativeSquaredPlusQuarter),
            init: InitMode::StageStationary,
            newton: NewtonSettings::default(),
            snapshot_stride: 20,
        }
    }

    pub fn experiment_4() -> Self {
        Self { num_elements: 50, dt: 1e-4, snapshot_stride: 200, ..Self::experiment_3() }
    }
}

/// `(u_h, q_h, p_h)` sampled at the quadrature points of every element.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl Snapshot {
    pub fn sample(solver: &HdgSolver, state: &SolutionState) -> Self {
        let b = &solver.assembler.basis;
        let mut s = Snapshot { t: state.t, x: vec![], u: vec![], q: vec![], p: vec![] };
        for (el, f) in solver.mesh.elements().zip(&state.fields) {
            s.x.extend(b.points.iter().map(|&xh| el.to_physical(xh)));
            s.u.extend(b.eval_at_points(&f.u));
            s.q.extend(b.eval_at_points(&f.q));
            s.p.extend(b.eval_at_points(&f.p));
        }
        s
    }

    /// Location of the largest sampled `u`.
    pub fn argmax_u(&self) -> f64 {
        let i = (0..self.u.len()).max_by(|&a, &b| self.u[a].total_cmp(&self.u[b])).unwrap_or(0);
        self.x.get(i).copied().unwrap_or(f64::NAN)
    }
}

/// Final-time errors of a time-series run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalErrors {
    pub e_u: f64,
    pub e_q: f64,
    pub e_p: f64,
    /// `||u_h - u|| / ||u||` at the final time.
    pub rel_u: f64,
}

#[derive(Debug, Clone)]
pub struct TimeSeriesRun {
    pub snapshots: Vec<Snapshot>,
    /// `(t_j, ||u_h(t_j)||)` for every step.
    pub energy: Vec<(f64, f64)>,
    pub errors: Option<FinalErrors>,
    pub newton_counts: Vec<usize>,
    pub dt: f64,
    pub steps: usize,
    pub final_state: SolutionState,
}

/// Runs `problem` over `[0, T]` and records snapshots, norms and final errors.
pub fn run_time_series(problem: &ProblemSpec, cfg: &TimeSeriesConfig) -> Result<TimeSeriesRun> {
    if cfg.snapshot_stride == 0 {
        return Err(HdgError::InvalidInput("snapshot stride must be positive".into()));
    }
    let mesh = Mesh::uniform(problem.a, problem.b, cfg.num_elements)?;
    let solver = HdgSolver::new(mesh, cfg.k, cfg.params, problem.clone(), cfg.newton)?;
    let mut snapshots = Vec::new();
    let mut energy = Vec::new();
    let mut j = 0usize;
    let (steps, _) = step_count(cfg.final_time, cfg.dt)?;
    let run = integrate_problem(&solver, cfg.scheme, cfg.init, cfg.final_time, cfg.dt, |s| {
        energy.push((s.t, verify::l2_norm(&s.u_coeffs(), &solver.mesh)));
        if j % cfg.snapshot_stride == 0 || j == steps {
            snapshots.push(Snapshot::sample(&solver, s));
        }
        j += 1;
    })?;
    debug!("time series finished: {} steps, {} snapshots", run.steps, snapshots.len());
    let errors = problem.exact.as_ref().map(|ex| {
        let t = cfg.final_time;
        let lb = &solver.load_basis;
        let m = &solver.mesh;
        let f = &run.state.fields;
        let pick = |g: fn(&crate::stepper::ElementFields) -> &Vec<f64>| f.iter().map(|x| g(x).clone()).collect::<Vec<_>>();
        let e_u = verify::l2_error(&pick(|x| &x.u), &|x| (ex.u)(x, t), m, lb);
        let zero = vec![vec![0.0; solver.modes()]; solver.num_elements()];
        let norm_u = verify::l2_error(&zero, &|x| (ex.u)(x, t), m, lb);
        FinalErrors {
            e_u,
            e_q: verify::l2_error(&pick(|x| &x.q), &|x| (ex.q)(x, t), m, lb),
            e_p: verify::l2_error(&pick(|x| &x.p), &|x| (ex.p)(x, t), m, lb),
            rel_u: if norm_u > 0.0 { e_u / norm_u } else { e_u },
        }
    });
    Ok(TimeSeriesRun {
        snapshots,
        energy,
        errors,
        newton_counts: run.newton_counts,
        dt: run.dt,
        steps: run.steps,
        final_state: run.state,
    })
}

/// Single soliton `2 sech^2(x - 4t + 4)` on `(-10, 0)`.
pub fn run_experiment_3(cfg: &TimeSeriesConfig) -> Result<TimeSeriesRun> {
    run_time_series(&problems::soliton_problem(), cfg)
}

/// Two-soliton interaction on `(-20, 0)`.
pub fn run_experiment_4(cfg: &TimeSeriesConfig) -> Result<TimeSeriesRun> {
    run_time_series(&problems::two_soliton_problem(), cfg)
}

/// Times at which the taller and the shorter of the two leading local maxima swap sides.
///
/// Returns the snapshot times where the location of the global maximum jumps across the
/// location of the secondary maximum, which happens when the fast wave overtakes.
pub fn overlap_times(snapshots: &[Snapshot]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, bool)> = None;
    for s in snapshots {
        let Some((tall, short)) = two_peaks(s) else { continue };
        let tall_left = tall < short;
        if let Some((tp, was_left)) = prev {
            if was_left != tall_left {
                out.push(0.5 * (tp + s.t));
            }
        }
        prev = Some((s.t, tall_left));
    }
    out
}

/// Locations of the highest and second-highest strict local maxima of `u`.
pub fn two_peaks(s: &Snapshot) -> Option<(f64, f64)> {
    let mut idx: Vec<usize> = (0..s.u.len()).collect();
    idx.sort_by(|&a, &b| s.x[a].total_cmp(&s.x[b]));
    let u: Vec<f64> = idx.iter().map(|&i| s.u[i]).collect();
    let x: Vec<f64> = idx.iter().map(|&i| s.x[i]).collect();
    let mut peaks: Vec<(f64, f64)> = (1..u.len().saturating_sub(1))
        .filter(|&i| u[i] > u[i - 1] && u[i] >= u[i + 1] && u[i] > 0.1)
        .map(|i| (u[i], x[i]))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    match peaks.as_slice() {
        [a, b, ..] => Some((a.1, b.1)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dt_rules() {
        assert_eq!(DtRule::Preset.dt(0.5, 1), 0.025);
        assert_eq!(DtRule::Preset.dt(0.5, 2), 0.0125);
        assert_eq!(DtRule::H2(0.2).dt(0.5, 3), 0.05);
        assert_eq!(DtRule::Fixed(1e-3).dt(0.5, 0), 1e-3);
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(0.1, 0.025).unwrap().0, 4);
        let (n, dt) = step_count(0.1, 0.03).unwrap();
        assert_eq!(n, 4);
        assert!((dt - 0.025).abs() < 1e-16);
        assert_eq!(step_count(2.0, 1e-3).unwrap().0, 2000);
        assert!(step_count(1.0, 0.0).is_err());
    }

    #[test]
    fn experiment_2_mesh_sizes() {
        assert_eq!(experiment_2_elements(3), 8);
        assert_eq!(experiment_2_elements(7), 128);
    }

    #[test]
    fn overlap_detection_on_closed_form() {
        let snaps: Vec<Snapshot> = (0..=40)
            .map(|j| {
                let t = 0.05 * j as f64;
                let x: Vec<f64> = (0..4000).map(|i| -20.0 + 20.0 * i as f64 / 3999.0).collect();
                let u = x.iter().map(|&x| problems::two_soliton_jet(x, t).value()).collect();
                Snapshot { t, x, u, q: vec![], p: vec![] }
            })
            .collect();
        let times = overlap_times(&snaps);
        assert!(!times.is_empty());
        assert!(times.iter().all(|t| (t - 0.5).abs() < 0.3), "{times:?}");
    }
}
