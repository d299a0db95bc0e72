//! Dense reference for static condensation: the full coupled Newton system of all
//! interior and trace unknowns, assembled without elimination.

use hdg_kdv::global::solve_banded;
use hdg_kdv::local::{ElementState, LocalBlocks, CHI_LEFT, CHI_RIGHT, MU_LEFT, MU_RIGHT, PHAT_RIGHT, UHAT_LEFT, UHAT_RIGHT};
use hdg_kdv::mesh::Mesh;
use hdg_kdv::problems;
use hdg_kdv::stepper::{ElementFields, HdgSolver, NewtonSettings, SolutionState};
use hdg_kdv::{FluxSpec, StabilizationParams, TauFRule};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub solver: HdgSolver,
    pub state: SolutionState,
    pub dt_eff: f64,
    pub u_prev: Vec<Vec<f64>>,
    pub source: Vec<Vec<f64>>,
}

pub fn random_case(n: usize, k: usize, flux: FluxSpec, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut problem = problems::zero_problem(-0.5, 1.0, flux);
    let (ul, ur, qr) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    problem.u_left = std::sync::Arc::new(move |_| ul);
    problem.u_right = std::sync::Arc::new(move |_| ur);
    problem.q_right = std::sync::Arc::new(move |_| qr);
    let params = StabilizationParams::new(0.3, -1.2, 1.5, 0.8).with_tau_f(TauFRule::DerivativeSquaredPlusQuarter);
    let solver =
        HdgSolver::new(Mesh::uniform(-0.5, 1.0, n).unwrap(), k, params, problem, NewtonSettings::default()).unwrap();
    let m = k + 1;
    let mut v = |len: usize| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let fields = (0..n).map(|_| ElementFields { u: v(m), q: v(m), p: v(m) }).collect();
    let mut state = SolutionState::zeros(n, m, 0.0);
    state.fields = fields;
    state.traces.values = v(2 * n + 1);
    let u_prev = (0..n).map(|_| v(m)).collect();
    let source = (0..n).map(|_| v(m)).collect();
    Case { solver, state, dt_eff: 0.05, u_prev, source }
}

/// Global rows and columns of element `e` (1-based) written out from the node numbering
/// `u_hat_i -> 2i`, `p_hat_i -> 2i - 1`.
pub fn element_maps(e: usize, n: usize) -> ([Option<usize>; 4], [usize; 3]) {
    let mut rows = [None; 4];
    if e >= 2 {
        rows[MU_LEFT] = Some(2 * (e - 1) - 1);
        rows[CHI_LEFT] = Some(2 * (e - 1));
    }
    rows[MU_RIGHT] = Some(2 * e - 1);
    if e < n {
        rows[CHI_RIGHT] = Some(2 * e);
    }
    let mut cols = [0; 3];
    cols[UHAT_LEFT] = 2 * (e - 1);
    cols[UHAT_RIGHT] = 2 * e;
    cols[PHAT_RIGHT] = 2 * e - 1;
    (rows, cols)
}

/// The un-condensed Newton matrix over `[interior unknowns of all elements; traces]`.
pub fn full_system(case: &Case) -> (DMatrix<f64>, DVector<f64>, Vec<LocalBlocks>) {
    let s = &case.solver;
    let n = s.num_elements();
    let m = s.modes();
    let ni = 3 * m * n;
    let nt = 2 * n + 1;
    let mut mat = DMatrix::zeros(ni + nt, ni + nt);
    let mut rhs = DVector::zeros(ni + nt);
    let mut all = Vec::new();
    for e in 0..n {
        let f = &case.state.fields[e];
        let st = ElementState {
            u: &f.u,
            q: &f.q,
            p: &f.p,
            uhat_left: case.state.traces.values[2 * e],
            uhat_right: case.state.traces.values[2 * e + 2],
            phat_right: case.state.traces.values[2 * e + 1],
        };
        let b = s
            .assembler
            .assemble_local_blocks(&s.mesh.element(e), &st, case.dt_eff, &case.source[e], &case.u_prev[e])
            .unwrap();
        let (rows, cols) = element_maps(e + 1, n);
        let off = 3 * m * e;
        for i in 0..3 * m {
            for j in 0..3 * m {
                mat[(off + i, off + j)] = b.a[(i, j)];
            }
            for (lj, &c) in cols.iter().enumerate() {
                mat[(off + i, ni + c)] = b.d[(i, lj)];
            }
            rhs[off + i] = b.r[i];
        }
        for (li, r) in rows.iter().enumerate() {
            if let Some(r) = r {
                for j in 0..3 * m {
                    mat[(ni + r, off + j)] += b.g[(li, j)];
                }
                for (lj, &c) in cols.iter().enumerate() {
                    mat[(ni + r, ni + c)] += b.t[(li, lj)];
                }
                rhs[ni + r] += b.r_trace[li];
            }
        }
        all.push(b);
    }
    let bc = s.problem.boundary(0.0);
    rhs[ni + 2 * n - 1] += bc.q_right;
    for (row, target) in [(0, bc.u_left), (2 * n, bc.u_right)] {
        for j in 0..ni + nt {
            mat[(ni + row, j)] = 0.0;
        }
        mat[(ni + row, ni + row)] = 1.0;
        rhs[ni + row] = target - case.state.traces.values[row];
    }
    (mat, rhs, all)
}

/// Largest relative mismatch of the condensed matrix and right-hand side against the
/// dense Schur complement.
pub fn schur_mismatch(case: &Case) -> (f64, f64) {
    let n = case.solver.num_elements();
    let (mat, rhs, _) = full_system(case);
    let ni = 3 * case.solver.modes() * n;
    let nt = 2 * n + 1;
    let mww = mat.view((0, 0), (ni, ni)).into_owned();
    let mwt = mat.view((0, ni), (ni, nt)).into_owned();
    let mtw = mat.view((ni, 0), (nt, ni)).into_owned();
    let mtt = mat.view((ni, ni), (nt, nt)).into_owned();
    let lu = mww.lu();
    let schur = &mtt - &mtw * lu.solve(&mwt).unwrap();
    let schur_rhs = rhs.rows(ni, nt) - &mtw * lu.solve(&rhs.rows(0, ni).into_owned()).unwrap();

    let (sys, _) = case
        .solver
        .linearize(&case.state, case.dt_eff, &case.u_prev, &case.source, &case.solver.problem.boundary(0.0))
        .unwrap();
    let dm = (sys.matrix.to_dense() - &schur).amax() / schur.amax().max(1e-300);
    let dr = (DVector::from_vec(sys.rhs.clone()) - &schur_rhs).amax() / schur_rhs.amax().max(1.0);
    (dm, dr)
}

/// Condensed solve followed by local recovery, scattered into the full unknown vector.
/// Returns the scaled residual in the un-condensed equations and the relative distance
/// to a dense direct solve.
pub fn recovery_mismatch(case: &Case) -> (f64, f64) {
    let n = case.solver.num_elements();
    let m = case.solver.modes();
    let (mat, rhs, _) = full_system(case);
    let ni = 3 * m * n;
    let (sys, condensed) = case
        .solver
        .linearize(&case.state, case.dt_eff, &case.u_prev, &case.source, &case.solver.problem.boundary(0.0))
        .unwrap();
    let dt = solve_banded(&sys).unwrap();
    let mut x = DVector::zeros(ni + 2 * n + 1);
    for (e, c) in condensed.iter().enumerate() {
        let inc = c.recover_interior(&Vector3::new(dt[2 * e], dt[2 * e + 2], dt[2 * e + 1]));
        let off = 3 * m * e;
        for i in 0..m {
            x[off + i] = inc.dp[i];
            x[off + m + i] = inc.dq[i];
            x[off + 2 * m + i] = inc.du[i];
        }
    }
    for (i, v) in dt.iter().enumerate() {
        x[ni + i] = *v;
    }
    let res = &mat * &x - &rhs;
    let scale = rhs.amax().max(1.0) + (mat.abs() * x.abs()).amax();
    let direct = mat.lu().solve(&rhs).unwrap();
    ((res.amax() / scale), (&direct - &x).amax() / direct.amax().max(1.0))
}
