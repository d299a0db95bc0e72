//! Newton iteration over the condensed system, implicit time schemes and the
//! initialization of discrete initial data.

use std::sync::Arc;

use crate::error::{HdgError, Result};
use crate::flux::{FluxSpec, StabilizationParams};
use crate::global::{assemble_global, scatter_trace_rows, solve_banded, BoundaryData, GlobalSystem, TraceVector};
use crate::local::{condense, CondensedElement, ElementState, LocalAssembler, LocalBlocks};
use crate::mesh::Mesh;
use crate::polybasis::{default_quadrature_points, ReferenceBasis};
use log::{debug, trace, warn};
use nalgebra::{Vector3, Vector4};

pub type SpaceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Exact `(u, q, p)` and optionally `u_t`, used for verification only.
#[derive(Clone)]
pub struct ExactFields {
    pub u: SpaceTimeFn,
    pub q: SpaceTimeFn,
    pub p: SpaceTimeFn,
    pub u_t: Option<SpaceTimeFn>,
}

/// `u_t + u_xxx + F(u)_x = f` on `(a, b)` with `u = u_D` at both ends and `u_x = q_N` at `b`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub a: f64,
    pub b: f64,
    pub flux: FluxSpec,
    pub source: SpaceTimeFn,
    pub u_left: TimeFn,
    pub u_right: TimeFn,
    pub q_right: TimeFn,
    pub initial: SpaceFn,
    pub initial_dx: Option<SpaceFn>,
    pub initial_dxxx: Option<SpaceFn>,
    pub exact: Option<ExactFields>,
}

impl ProblemSpec {
    pub fn boundary(&self, t: f64) -> BoundaryData {
        BoundaryData { u_left: (self.u_left)(t), u_right: (self.u_right)(t), q_right: (self.q_right)(t) }
    }

    /// Problem whose data are all sampled from an exact solution, with source `f`.
    pub fn from_exact(a: f64, b: f64, flux: FluxSpec, source: SpaceTimeFn, exact: ExactFields) -> Self {
        let (u, q) = (exact.u.clone(), exact.q.clone());
        let (ul, ur, qr, u0) = (u.clone(), u.clone(), q.clone(), u.clone());
        let q0 = q.clone();
        Self {
            a,
            b,
            flux,
            source,
            u_left: Arc::new(move |t| ul(a, t)),
            u_right: Arc::new(move |t| ur(b, t)),
            q_right: Arc::new(move |t| qr(b, t)),
            initial: Arc::new(move |x| u0(x, 0.0)),
            initial_dx: Some(Arc::new(move |x| q0(x, 0.0))),
            initial_dxxx: None,
            exact: Some(exact),
        }
    }
}

/// Newton stopping rule: `||R||_inf <= abs_tol + rel_tol * ||R_0||_inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Step halvings allowed per iteration; 0 gives plain Newton.
    pub max_halvings: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { abs_tol: 1e-11, rel_tol: 1e-12, max_iters: 25, max_halvings: 8 }
    }
}

/// Modal coefficients of `(u_h, q_h, p_h)` on one element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementFields {
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl ElementFields {
    pub fn zeros(modes: usize) -> Self {
        Self { u: vec![0.0; modes], q: vec![0.0; modes], p: vec![0.0; modes] }
    }
}

/// How the discrete initial data were produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    /// HDG solution of `v + v_xxx + F(v)_x = u0 + u0''' + F(u0)_x`.
    Stationary,
    /// HDG solution of `v / eps + v_xxx + F(v)_x = u0 / eps + u0''' + F(u0)_x`.
    ScaledStationary(f64),
    /// `ScaledStationary` with `eps` equal to the `dt_eff` of the first implicit stage.
    StageStationary,
    /// Elementwise L2 projection with `q_h`, `p_h` from the discrete gradient equations.
    L2Fallback,
}

/// Full discrete state at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    pub fields: Vec<ElementFields>,
    pub traces: TraceVector,
    pub t: f64,
}

impl SolutionState {
    pub fn zeros(num_elements: usize, modes: usize, t: f64) -> Self {
        Self {
            fields: vec![ElementFields::zeros(modes); num_elements],
            traces: TraceVector::zeros(num_elements),
            t,
        }
    }

    pub fn u_coeffs(&self) -> Vec<Vec<f64>> {
        self.fields.iter().map(|f| f.u.clone()).collect()
    }

    fn element_view(&self, idx: usize) -> ElementState<'_> {
        let f = &self.fields[idx];
        ElementState {
            u: &f.u,
            q: &f.q,
            p: &f.p,
            uhat_left: self.traces.uhat(idx),
            uhat_right: self.traces.uhat(idx + 1),
            phat_right: self.traces.phat(idx + 1),
        }
    }

    /// `2 * self - other`, applied to every coefficient and trace.
    pub fn extrapolate_from(&self, other: &SolutionState, t: f64) -> SolutionState {
        let lin = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 2.0 * x - y).collect::<Vec<f64>>();
        SolutionState {
            fields: self
                .fields
                .iter()
                .zip(&other.fields)
                .map(|(s, o)| ElementFields { u: lin(&s.u, &o.u), q: lin(&s.q, &o.q), p: lin(&s.p, &o.p) })
                .collect(),
            traces: TraceVector { values: lin(&self.traces.values, &other.traces.values) },
            t,
        }
    }
}

/// Residual norms recorded at each Newton assembly; `history[0]` is the initial residual.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewtonTrace {
    pub history: Vec<f64>,
}

impl NewtonTrace {
    /// Number of Newton updates performed.
    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    BackwardEuler,
    Midpoint,
}

impl TimeScheme {
    /// `dt_eff` of the implicit stage for step `dt`.
    pub fn stage_dt(&self, dt: f64) -> f64 {
        match self {
            TimeScheme::BackwardEuler => dt,
            TimeScheme::Midpoint => 0.5 * dt,
        }
    }
}

/// The HDG discretization of a [`ProblemSpec`] on a fixed mesh.
#[derive(Clone)]
pub struct HdgSolver {
    pub mesh: Mesh,
    pub assembler: LocalAssembler,
    /// Elevated rule for source moments, projections and errors.
    pub load_basis: ReferenceBasis,
    pub problem: ProblemSpec,
    pub settings: NewtonSettings,
}

impl HdgSolver {
    pub fn new(
        mesh: Mesh,
        k: usize,
        params: StabilizationParams,
        problem: ProblemSpec,
        settings: NewtonSettings,
    ) -> Result<Self> {
        if settings.abs_tol <= 0.0 || settings.rel_tol < 0.0 || settings.max_iters == 0 {
            return Err(HdgError::InvalidInput(format!("bad Newton settings {settings:?}")));
        }
        let nq = default_quadrature_points(k, problem.flux.m);
        let basis = ReferenceBasis::new(k, nq)?;
        let load_basis = basis.elevated(3);
        Ok(Self {
            assembler: LocalAssembler::new(basis, params, problem.flux),
            mesh,
            load_basis,
            problem,
            settings,
        })
    }

    pub fn k(&self) -> usize {
        self.assembler.basis.k
    }

    pub fn modes(&self) -> usize {
        self.assembler.modes()
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_elements()
    }

    /// `(g, P_i)_{I_e}` for every element.
    pub fn moments(&self, g: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
        let b = &self.load_basis;
        self.mesh
            .elements()
            .map(|el| {
                let jac = el.jacobian();
                let gq: Vec<f64> = b.points.iter().map(|&xh| g(el.to_physical(xh))).collect();
                (0..b.num_modes())
                    .map(|i| (0..b.num_points()).map(|q| b.weights[q] * gq[q] * b.values[(q, i)]).sum::<f64>() * jac)
                    .collect()
            })
            .collect()
    }

    /// Elementwise L2 projection of `g`.
    pub fn l2_project(&self, g: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
        let b = &self.load_basis;
        self.mesh
            .elements()
            .zip(self.moments(g))
            .map(|(el, mom)| mom.iter().enumerate().map(|(i, m)| m / (el.jacobian() * b.mass_diag(i))).collect())
            .collect()
    }

    fn assemble_all(
        &self,
        state: &SolutionState,
        dt_eff: f64,
        u_prev: &[Vec<f64>],
        source: &[Vec<f64>],
    ) -> Result<Vec<LocalBlocks>> {
        let n = self.num_elements();
        if state.fields.len() != n || u_prev.len() != n || source.len() != n {
            return Err(HdgError::DimensionMismatch { expected: n, found: state.fields.len().min(u_prev.len()).min(source.len()) });
        }
        (0..n)
            .map(|e| {
                self.assembler.assemble_local_blocks(
                    &self.mesh.element(e),
                    &state.element_view(e),
                    dt_eff,
                    &source[e],
                    &u_prev[e],
                )
            })
            .collect()
    }

    fn residual_norm(&self, blocks: &[LocalBlocks], bc: &BoundaryData, traces: &TraceVector) -> Result<f64> {
        let local = blocks.iter().flat_map(|b| b.r.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let tr: Vec<Vector4<f64>> = blocks.iter().map(|b| b.r_trace).collect();
        let global = scatter_trace_rows(&tr, bc, traces)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(local.max(global))
    }

    /// Residual norm of `state` for the given stage data, without updating it.
    pub fn residual(
        &self,
        state: &SolutionState,
        dt_eff: f64,
        u_prev: &[Vec<f64>],
        source: &[Vec<f64>],
        bc: &BoundaryData,
    ) -> Result<f64> {
        let blocks = self.assemble_all(state, dt_eff, u_prev, source)?;
        self.residual_norm(&blocks, bc, &state.traces)
    }

    /// Condensed global system at `state` (one Newton linearization).
    pub fn linearize(
        &self,
        state: &SolutionState,
        dt_eff: f64,
        u_prev: &[Vec<f64>],
        source: &[Vec<f64>],
        bc: &BoundaryData,
    ) -> Result<(GlobalSystem, Vec<CondensedElement>)> {
        let blocks = self.assemble_all(state, dt_eff, u_prev, source)?;
        let condensed = blocks.iter().enumerate().map(|(e, b)| condense(b, e + 1)).collect::<Result<Vec<_>>>()?;
        let sys = assemble_global(&condensed, bc, &state.traces)?;
        Ok((sys, condensed))
    }

    /// Newton iteration for one implicit stage with explicit source moments and boundary data.
    ///
    /// A full step is always tried first. When it does not reduce the residual norm the
    /// step is halved up to `settings.max_halvings` times, and the last trial is taken
    /// regardless.
    pub fn newton_solve_with(
        &self,
        mut state: SolutionState,
        dt_eff: f64,
        u_prev: &[Vec<f64>],
        source: &[Vec<f64>],
        bc: &BoundaryData,
    ) -> Result<(SolutionState, NewtonTrace)> {
        let mut trace = NewtonTrace::default();
        let mut blocks = self.assemble_all(&state, dt_eff, u_prev, source)?;
        let mut res = self.residual_norm(&blocks, bc, &state.traces)?;
        loop {
            trace.history.push(res);
            trace!("newton iter {} residual {:.3e}", trace.iterations(), res);
            if !res.is_finite() {
                return Err(HdgError::NewtonDiverged { iterations: trace.iterations(), history: trace.history });
            }
            if res <= self.settings.abs_tol + self.settings.rel_tol * trace.history[0] {
                return Ok((state, trace));
            }
            if trace.iterations() >= self.settings.max_iters {
                return Err(HdgError::NewtonDiverged { iterations: trace.iterations(), history: trace.history });
            }
            let condensed =
                blocks.iter().enumerate().map(|(e, b)| condense(b, e + 1)).collect::<Result<Vec<_>>>()?;
            let sys = assemble_global(&condensed, bc, &state.traces)?;
            let delta = solve_banded(&sys)?;
            let increments: Vec<_> = condensed
                .iter()
                .enumerate()
                .map(|(e, c)| c.recover_interior(&Vector3::new(delta[2 * e], delta[2 * e + 2], delta[2 * e + 1])))
                .collect();
            let mut lambda = 1.0;
            let mut halvings = 0;
            loop {
                let mut trial = state.clone();
                for (f, inc) in trial.fields.iter_mut().zip(&increments) {
                    add_scaled(&mut f.p, &inc.dp, lambda);
                    add_scaled(&mut f.q, &inc.dq, lambda);
                    add_scaled(&mut f.u, &inc.du, lambda);
                }
                add_scaled(&mut trial.traces.values, &delta, lambda);
                let trial_blocks = self.assemble_all(&trial, dt_eff, u_prev, source)?;
                let trial_res = self.residual_norm(&trial_blocks, bc, &trial.traces)?;
                if trial_res < res || halvings >= self.settings.max_halvings {
                    if halvings > 0 {
                        debug!("newton step damped by {lambda}");
                    }
                    state = trial;
                    blocks = trial_blocks;
                    res = trial_res;
                    break;
                }
                lambda *= 0.5;
                halvings += 1;
            }
        }
    }

    /// Newton iteration for an implicit stage at `stage_time` with mass coefficient `1 / dt_eff`.
    pub fn newton_solve(
        &self,
        state: SolutionState,
        stage_time: f64,
        dt_eff: f64,
        u_prev: &[Vec<f64>],
    ) -> Result<(SolutionState, NewtonTrace)> {
        let f = self.problem.source.clone();
        let source = self.moments(|x| f(x, stage_time));
        let bc = self.problem.boundary(stage_time);
        let (mut s, tr) = self.newton_solve_with(state, dt_eff, u_prev, &source, &bc)?;
        s.t = stage_time;
        Ok((s, tr))
    }

    pub fn backward_euler_step(&self, state: &SolutionState, dt: f64) -> Result<(SolutionState, NewtonTrace)> {
        if !(dt > 0.0) {
            return Err(HdgError::NonPositiveTimeStep(dt));
        }
        let u_prev = state.u_coeffs();
        self.newton_solve(state.clone(), state.t + dt, dt, &u_prev)
    }

    /// Implicit midpoint: a backward-Euler half step to `t + dt/2`, then `w^{j+1} = 2 w^{j,1} - w^j`.
    pub fn midpoint_step(&self, state: &SolutionState, dt: f64) -> Result<(SolutionState, NewtonTrace)> {
        if !(dt > 0.0) {
            return Err(HdgError::NonPositiveTimeStep(dt));
        }
        let u_prev = state.u_coeffs();
        let (stage, tr) = self.newton_solve(state.clone(), state.t + 0.5 * dt, 0.5 * dt, &u_prev)?;
        Ok((stage.extrapolate_from(state, state.t + dt), tr))
    }

    pub fn step(&self, scheme: TimeScheme, state: &SolutionState, dt: f64) -> Result<(SolutionState, NewtonTrace)> {
        match scheme {
            TimeScheme::BackwardEuler => self.backward_euler_step(state, dt),
            TimeScheme::Midpoint => self.midpoint_step(state, dt),
        }
    }

    /// Advances `steps` steps of size `dt`, calling `observe` after each accepted step.
    pub fn integrate(
        &self,
        mut state: SolutionState,
        scheme: TimeScheme,
        dt: f64,
        steps: usize,
        mut observe: impl FnMut(&SolutionState, &NewtonTrace),
    ) -> Result<SolutionState> {
        let t0 = state.t;
        for j in 0..steps {
            let (mut next, tr) = self.step(scheme, &state, dt)?;
            // accumulate time without drift
            next.t = t0 + (j + 1) as f64 * dt;
            observe(&next, &tr);
            state = next;
        }
        Ok(state)
    }

    /// L2 projection of `u0` with `q_h`, `p_h` from the discrete gradient equations.
    pub fn l2_initial_state(&self) -> SolutionState {
        let n = self.num_elements();
        let b = &self.assembler.basis;
        let modes = self.modes();
        let u0 = self.problem.initial.clone();
        let u = self.l2_project(|x| u0(x));
        let bc = self.problem.boundary(0.0);

        let nodal_mean = |vals: &[Vec<f64>], left_bc: Option<f64>, right_bc: Option<f64>| -> Vec<f64> {
            (0..=n)
                .map(|i| match i {
                    0 => left_bc.unwrap_or_else(|| b.left_value(&vals[0])),
                    i if i == n => right_bc.unwrap_or_else(|| b.right_value(&vals[n - 1])),
                    i => 0.5 * (b.right_value(&vals[i - 1]) + b.left_value(&vals[i])),
                })
                .collect()
        };
        // discrete gradient: (g, v) = -(f, v_x) + <f_hat, v n>
        let gradient = |f: &[Vec<f64>], fhat: &[f64]| -> Vec<Vec<f64>> {
            (0..n)
                .map(|e| {
                    let jac = self.mesh.element(e).jacobian();
                    (0..modes)
                        .map(|i| {
                            let c: f64 = (0..modes).map(|j| b.convection[(i, j)] * f[e][j]).sum();
                            (-c + fhat[e + 1] * b.right_vals[i] - fhat[e] * b.left_vals[i]) / (jac * b.mass_diag(i))
                        })
                        .collect()
                })
                .collect()
        };
        let uhat = nodal_mean(&u, Some(bc.u_left), Some(bc.u_right));
        let q = gradient(&u, &uhat);
        let qhat = nodal_mean(&q, None, Some(bc.q_right));
        let p = gradient(&q, &qhat);
        let phat = nodal_mean(&p, None, None);

        let mut traces = TraceVector::zeros(n);
        for i in 0..=n {
            traces.set_uhat(i, uhat[i]);
        }
        for i in 1..=n {
            traces.set_phat(i, phat[i]);
        }
        let fields = (0..n)
            .map(|e| ElementFields { u: u[e].clone(), q: q[e].clone(), p: p[e].clone() })
            .collect();
        SolutionState { fields, traces, t: 0.0 }
    }

    /// Pseudo-transient continuation towards the stationary solution: solves
    /// `(v - w) / sigma + v / eps + v_xxx + F(v)_x = g` for growing `sigma`, with `w`
    /// the previous iterate, and returns the last iterate.
    fn pseudo_transient(
        &self,
        mut w: SolutionState,
        eps: f64,
        source: &[Vec<f64>],
        bc: &BoundaryData,
    ) -> Result<SolutionState> {
        let mut sigma = 1e-2 * eps;
        while sigma < 1e8 * eps {
            // mass coefficient 1/eps + 1/sigma, and u_prev / dt_eff = w / sigma
            let dt_eff = sigma * eps / (sigma + eps);
            let u_prev: Vec<Vec<f64>> =
                w.fields.iter().map(|f| f.u.iter().map(|v| v * dt_eff / sigma).collect()).collect();
            match self.newton_solve_with(w.clone(), dt_eff, &u_prev, source, bc) {
                Ok((next, _)) => {
                    w = next;
                    sigma *= 2.0;
                }
                Err(HdgError::NewtonDiverged { .. }) if sigma > 1e-6 * eps => sigma *= 0.25,
                Err(e) => return Err(e),
            }
        }
        Ok(w)
    }

    fn stationary_state(&self, eps: f64) -> Result<(SolutionState, NewtonTrace)> {
        if !(eps > 0.0) {
            return Err(HdgError::NonPositiveTimeStep(eps));
        }
        let guess = self.l2_initial_state();
        let pb = &self.problem;
        let dxxx = pb.initial_dxxx.clone().ok_or(HdgError::MissingInitialDerivative)?;
        let flux = pb.flux;
        let needs_dx = flux.beta != 0.0 && flux.m >= 1;
        let dx = match (&pb.initial_dx, needs_dx) {
            (Some(d), _) => d.clone(),
            (None, false) => Arc::new(|_| 0.0),
            (None, true) => return Err(HdgError::MissingInitialDerivative),
        };
        let u0 = pb.initial.clone();
        let g = move |x: f64| {
            let v = u0(x);
            v / eps + dxxx(x) + flux.derivative(v) * dx(x)
        };
        let source = self.moments(g);
        let zero = vec![vec![0.0; self.modes()]; self.num_elements()];
        let bc = pb.boundary(0.0);
        let (mut s, tr) = match self.newton_solve_with(guess.clone(), eps, &zero, &source, &bc) {
            Ok(r) => r,
            Err(HdgError::NewtonDiverged { .. }) => {
                warn!("stationary initialization: Newton failed from the L2 guess, using continuation");
                let start = self.pseudo_transient(guess, eps, &source, &bc)?;
                self.newton_solve_with(start, eps, &zero, &source, &bc)?
            }
            Err(e) => return Err(e),
        };
        s.t = 0.0;
        debug!("stationary initialization converged in {} iterations", tr.iterations());
        Ok((s, tr))
    }

    /// Discrete initial data at `t = 0`. `InitMode::StageStationary` needs the step and
    /// is only accepted by [`HdgSolver::initial_state_for_step`].
    pub fn initial_state(&self, mode: InitMode) -> Result<(SolutionState, NewtonTrace)> {
        match mode {
            InitMode::L2Fallback => Ok((self.l2_initial_state(), NewtonTrace::default())),
            InitMode::Stationary => self.stationary_state(1.0),
            InitMode::ScaledStationary(eps) => self.stationary_state(eps),
            InitMode::StageStationary => {
                Err(HdgError::InvalidInput("stage-scaled initialization needs the time step".into()))
            }
        }
    }

    /// Discrete initial data for a run with `scheme` and step `dt`.
    pub fn initial_state_for_step(
        &self,
        mode: InitMode,
        scheme: TimeScheme,
        dt: f64,
    ) -> Result<(SolutionState, NewtonTrace)> {
        match mode {
            InitMode::StageStationary => self.stationary_state(scheme.stage_dt(dt)),
            other => self.initial_state(other),
        }
    }
}

fn add_scaled(a: &mut [f64], b: &[f64], s: f64) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * y;
    }
}
