//! Element-local Newton blocks and static condensation.
//!
//! Local unknowns are ordered `[p, q, u]` (each `k + 1` Legendre modes), local equations
//! `[eq1 (test v), eq2 (test z), eq3 (test w)]`. The element's trace unknowns are
//! `[u_hat(x_{i-1}), u_hat(x_i), p_hat^-(x_i)]`, and its trace-equation rows are
//! `[mu(x_{i-1}), chi(x_{i-1}), mu(x_i), chi(x_i)]`: `mu` rows are the `q_hat` jump
//! conditions and `chi` rows the `p_hat + F_hat` jump conditions.
//!
//! Residuals are stored as `R = -G(x)`, where `G` is the nonlinear system written as
//! "left-hand side minus right-hand side", so that the Newton update solves `J dx = R`.

use crate::error::{HdgError, Result};
use crate::flux::{FluxSpec, StabilizationParams};
use crate::mesh::Element;
use crate::polybasis::ReferenceBasis;
use nalgebra::{DMatrix, DVector, Matrix4x3, Vector3, Vector4};

pub const MU_LEFT: usize = 0;
pub const CHI_LEFT: usize = 1;
pub const MU_RIGHT: usize = 2;
pub const CHI_RIGHT: usize = 3;

pub const UHAT_LEFT: usize = 0;
pub const UHAT_RIGHT: usize = 1;
pub const PHAT_RIGHT: usize = 2;

/// Current Newton iterate restricted to one element.
#[derive(Debug, Clone, Copy)]
pub struct ElementState<'a> {
    pub u: &'a [f64],
    pub q: &'a [f64],
    pub p: &'a [f64],
    pub uhat_left: f64,
    pub uhat_right: f64,
    pub phat_right: f64,
}

/// Linearized element system `A dx + D dt = R`, `G dx + T dt = R_trace`.
#[derive(Debug, Clone)]
pub struct LocalBlocks {
    /// `[[0, A1, B1], [A2, -B1^T, C], [B2, 0, A3]]`
    pub a: DMatrix<f64>,
    /// columns for `(d u_hat_left, d u_hat_right, d p_hat_right)`
    pub d: DMatrix<f64>,
    /// trace-equation rows against the interior unknowns
    pub g: DMatrix<f64>,
    /// trace-equation rows against the trace unknowns
    pub t: Matrix4x3<f64>,
    pub r: DVector<f64>,
    pub r_trace: Vector4<f64>,
}

impl LocalBlocks {
    pub fn modes(&self) -> usize {
        self.a.nrows() / 3
    }
}

/// Per-element Schur complement plus what is needed to recover the interior increments.
#[derive(Debug, Clone)]
pub struct CondensedElement {
    pub k_elem: Matrix4x3<f64>,
    pub f_elem: Vector4<f64>,
    ainv_d: DMatrix<f64>,
    ainv_r: DVector<f64>,
}

/// Interior increments of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorIncrement {
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
    pub du: Vec<f64>,
}

/// Traces and fluxes evaluated at the two endpoints of an element.
struct EndpointData {
    u_l: f64,
    u_r: f64,
    tau_f_l: f64,
    tau_f_r: f64,
    dtau_f_l: (f64, f64),
    dtau_f_r: (f64, f64),
}

/// Builds element blocks for a fixed basis, stabilization and flux.
#[derive(Debug, Clone)]
pub struct LocalAssembler {
    pub basis: ReferenceBasis,
    pub params: StabilizationParams,
    pub flux: FluxSpec,
}

impl LocalAssembler {
    pub fn new(basis: ReferenceBasis, params: StabilizationParams, flux: FluxSpec) -> Self {
        Self { basis, params, flux }
    }

    pub fn modes(&self) -> usize {
        self.basis.num_modes()
    }

    fn check_state(&self, state: &ElementState, source: &[f64], u_prev: &[f64]) -> Result<()> {
        let n = self.modes();
        for len in [state.u.len(), state.q.len(), state.p.len(), source.len(), u_prev.len()] {
            if len != n {
                return Err(HdgError::DimensionMismatch { expected: n, found: len });
            }
        }
        Ok(())
    }

    fn endpoints(&self, state: &ElementState) -> EndpointData {
        let b = &self.basis;
        let u_l = b.left_value(state.u);
        let u_r = b.right_value(state.u);
        let pr = &self.params;
        EndpointData {
            u_l,
            u_r,
            tau_f_l: pr.tau_f_value(&self.flux, state.uhat_left, u_l),
            tau_f_r: pr.tau_f_value(&self.flux, state.uhat_right, u_r),
            dtau_f_l: pr.tau_f_partials(&self.flux, state.uhat_left, u_l),
            dtau_f_r: pr.tau_f_partials(&self.flux, state.uhat_right, u_r),
        }
    }

    /// Nonlinear residual `G` of the three local equations and the element's four
    /// trace-equation contributions, evaluated directly from the numerical-trace definitions.
    pub fn residual(
        &self,
        elem: &Element,
        state: &ElementState,
        dt_eff: f64,
        source_moments: &[f64],
        u_prev: &[f64],
    ) -> Result<(DVector<f64>, Vector4<f64>)> {
        check_dt(dt_eff)?;
        self.check_state(state, source_moments, u_prev)?;
        let b = &self.basis;
        let n = self.modes();
        let jac = elem.jacobian();
        let mass_coeff = 1.0 / dt_eff;
        let tp = &self.params;
        let ep = self.endpoints(state);

        let (q_l, q_r) = (b.left_value(state.q), b.right_value(state.q));
        let (p_l, p_r) = (b.left_value(state.p), b.right_value(state.p));
        let (uh_l, uh_r, ph_r) = (state.uhat_left, state.uhat_right, state.phat_right);

        // numerical traces; n = -1 on the left, +1 on the right
        let qhat_l = q_l - tp.tau_qu_plus * (uh_l - ep.u_l);
        let qhat_r = q_r + tp.tau_qu_minus * (uh_r - ep.u_r) + tp.tau_qp_minus * (ph_r - p_r);
        let phat_l = p_l - tp.tau_pu_plus * (uh_l - ep.u_l);
        let fhat_l = self.flux.value(uh_l) + ep.tau_f_l * (uh_l - ep.u_l);
        let fhat_r = self.flux.value(uh_r) - ep.tau_f_r * (uh_r - ep.u_r);

        let u_q = b.eval_at_points(state.u);
        let mut g = DVector::zeros(3 * n);
        for i in 0..n {
            let (li, ri) = (b.left_vals[i], b.right_vals[i]);
            let m = jac * b.mass_diag(i);
            let mut cu = 0.0;
            let mut cq = 0.0;
            let mut cp = 0.0;
            for j in 0..n {
                let c = b.convection[(i, j)];
                cu += c * state.u[j];
                cq += c * state.q[j];
                cp += c * state.p[j];
            }
            let flux_term: f64 = (0..b.num_points())
                .map(|qp| b.weights[qp] * self.flux.value(u_q[qp]) * b.derivs[(qp, i)])
                .sum();
            g[i] = m * state.q[i] + cu - (uh_r * ri - uh_l * li);
            g[n + i] = m * state.p[i] + cq - (qhat_r * ri - qhat_l * li);
            g[2 * n + i] = mass_coeff * m * (state.u[i] - u_prev[i]) - cp - flux_term
                + (ph_r + fhat_r) * ri
                - (phat_l + fhat_l) * li
                - source_moments[i];
        }
        let gt = Vector4::new(-qhat_l, -(phat_l + fhat_l), qhat_r, ph_r + fhat_r);
        Ok((g, gt))
    }

    /// Newton blocks of the element, with residuals `R = -G`.
    pub fn assemble_local_blocks(
        &self,
        elem: &Element,
        state: &ElementState,
        dt_eff: f64,
        source_moments: &[f64],
        u_prev: &[f64],
    ) -> Result<LocalBlocks> {
        let (g_loc, g_tr) = self.residual(elem, state, dt_eff, source_moments, u_prev)?;
        let b = &self.basis;
        let n = self.modes();
        let jac = elem.jacobian();
        let mass_coeff = 1.0 / dt_eff;
        let tp = &self.params;
        let fl = &self.flux;
        let ep = self.endpoints(state);
        let (uh_l, uh_r) = (state.uhat_left, state.uhat_right);
        let (lv, rv) = (&b.left_vals, &b.right_vals);
        let (p_blk, q_blk, u_blk) = (0, n, 2 * n);

        // linearized flux-trace coefficients
        let sigma_l = ep.tau_f_l - ep.dtau_f_l.1 * (uh_l - ep.u_l);
        let sigma_r = ep.tau_f_r - ep.dtau_f_r.1 * (uh_r - ep.u_r);
        let lambda_l = -fl.derivative(uh_l) - ep.dtau_f_l.0 * (uh_l - ep.u_l) - ep.tau_f_l;
        let lambda_r = fl.derivative(uh_r) - ep.dtau_f_r.0 * (uh_r - ep.u_r) - ep.tau_f_r;

        let u_q = b.eval_at_points(state.u);
        let dflux_q: Vec<f64> = u_q.iter().map(|&u| fl.derivative(u)).collect();

        let mut a = DMatrix::zeros(3 * n, 3 * n);
        let mut d = DMatrix::zeros(3 * n, 3);
        for i in 0..n {
            let m = jac * b.mass_diag(i);
            let (li, ri) = (lv[i], rv[i]);
            // a1(dq, v), a2 mass part
            a[(i, q_blk + i)] = m;
            a[(n + i, p_blk + i)] = m;
            a[(2 * n + i, u_blk + i)] = mass_coeff * m;
            for j in 0..n {
                let (lj, rj) = (lv[j], rv[j]);
                let c_ij = b.convection[(i, j)];
                // b1(du, v) = (du, v_x)
                a[(i, u_blk + j)] = c_ij;
                // a2 boundary part: <tau_qp dp, z> on right endpoints
                a[(n + i, p_blk + j)] += tp.tau_qp_minus * ri * rj;
                // -b1(z, dq)
                a[(n + i, q_blk + j)] = -b.convection[(j, i)];
                // c(du, z) = <tau_qu du, z>
                a[(n + i, u_blk + j)] = tp.tau_qu_minus * ri * rj + tp.tau_qu_plus * li * lj;
                // b2(dp, w) = -(dp, w_x) - <dp, w> on left endpoints
                a[(2 * n + i, p_blk + j)] = -c_ij - li * lj;
                // a3(du, w)
                let nonlinear: f64 = (0..b.num_points())
                    .map(|qp| b.weights[qp] * dflux_q[qp] * b.values[(qp, j)] * b.derivs[(qp, i)])
                    .sum();
                a[(2 * n + i, u_blk + j)] += -nonlinear
                    + sigma_r * ri * rj
                    + (sigma_l - tp.tau_pu_plus) * li * lj;
            }
            // d1, d2/e2, d3/e3
            d[(i, UHAT_LEFT)] = li;
            d[(i, UHAT_RIGHT)] = -ri;
            d[(n + i, UHAT_LEFT)] = -tp.tau_qu_plus * li;
            d[(n + i, UHAT_RIGHT)] = -tp.tau_qu_minus * ri;
            d[(n + i, PHAT_RIGHT)] = -tp.tau_qp_minus * ri;
            d[(2 * n + i, UHAT_LEFT)] = (tp.tau_pu_plus + lambda_l) * li;
            d[(2 * n + i, UHAT_RIGHT)] = lambda_r * ri;
            d[(2 * n + i, PHAT_RIGHT)] = ri;
        }

        // g1..g5 restricted to this element
        let mut g = DMatrix::zeros(4, 3 * n);
        for j in 0..n {
            let (lj, rj) = (lv[j], rv[j]);
            g[(MU_LEFT, q_blk + j)] = -lj;
            g[(MU_LEFT, u_blk + j)] = -tp.tau_qu_plus * lj;
            g[(CHI_LEFT, p_blk + j)] = -lj;
            g[(CHI_LEFT, u_blk + j)] = (sigma_l - tp.tau_pu_plus) * lj;
            g[(MU_RIGHT, p_blk + j)] = -tp.tau_qp_minus * rj;
            g[(MU_RIGHT, q_blk + j)] = rj;
            g[(MU_RIGHT, u_blk + j)] = -tp.tau_qu_minus * rj;
            g[(CHI_RIGHT, u_blk + j)] = sigma_r * rj;
        }

        // d4, e4, d5, e5
        let mut t = Matrix4x3::zeros();
        t[(MU_LEFT, UHAT_LEFT)] = tp.tau_qu_plus;
        t[(CHI_LEFT, UHAT_LEFT)] = tp.tau_pu_plus + lambda_l;
        t[(MU_RIGHT, UHAT_RIGHT)] = tp.tau_qu_minus;
        t[(MU_RIGHT, PHAT_RIGHT)] = tp.tau_qp_minus;
        t[(CHI_RIGHT, UHAT_RIGHT)] = lambda_r;
        t[(CHI_RIGHT, PHAT_RIGHT)] = 1.0;

        Ok(LocalBlocks { a, d, g, t, r: -g_loc, r_trace: -g_tr })
    }
}

fn check_dt(dt_eff: f64) -> Result<()> {
    if dt_eff.is_finite() && dt_eff > 0.0 {
        Ok(())
    } else {
        Err(HdgError::NonPositiveTimeStep(dt_eff))
    }
}

/// Relative pivot size below which a local matrix is treated as singular.
const LOCAL_PIVOT_TOL: f64 = 1e-13;

/// Eliminates the interior unknowns of one element.
///
/// `element` is the 1-based element index, used only for error reporting.
pub fn condense(blocks: &LocalBlocks, element: usize) -> Result<CondensedElement> {
    let lu = blocks.a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max_pivot = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_pivot = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max_pivot > 0.0) || min_pivot <= LOCAL_PIVOT_TOL * max_pivot || !min_pivot.is_finite() {
        return Err(HdgError::SingularLocal { element, pivot: min_pivot });
    }
    let ainv_d = lu.solve(&blocks.d).ok_or(HdgError::SingularLocal { element, pivot: min_pivot })?;
    let ainv_r = lu.solve(&blocks.r).ok_or(HdgError::SingularLocal { element, pivot: min_pivot })?;

    let k_elem = blocks.t - fixed_4x3(&(&blocks.g * &ainv_d));
    let gr = &blocks.g * &ainv_r;
    let f_elem = blocks.r_trace - Vector4::new(gr[0], gr[1], gr[2], gr[3]);
    Ok(CondensedElement { k_elem, f_elem, ainv_d, ainv_r })
}

fn fixed_4x3(m: &DMatrix<f64>) -> Matrix4x3<f64> {
    Matrix4x3::from_fn(|i, j| m[(i, j)])
}

impl CondensedElement {
    pub fn modes(&self) -> usize {
        self.ainv_r.len() / 3
    }

    /// `A^{-1} (R - D dt)`, split into `(dp, dq, du)`.
    pub fn recover_interior(&self, delta_traces: &Vector3<f64>) -> InteriorIncrement {
        let x = &self.ainv_r - &self.ainv_d * delta_traces;
        let n = self.modes();
        InteriorIncrement {
            dp: x.rows(0, n).iter().copied().collect(),
            dq: x.rows(n, n).iter().copied().collect(),
            du: x.rows(2 * n, n).iter().copied().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::TauFRule;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assembler(k: usize, flux: FluxSpec, params: StabilizationParams) -> LocalAssembler {
        let nq = crate::polybasis::default_quadrature_points(k, flux.m);
        LocalAssembler::new(ReferenceBasis::new(k, nq).unwrap(), params, flux)
    }

    fn unit_element() -> Element {
        Element { x_left: 0.0, x_right: 1.0, h: 1.0 }
    }

    struct OwnedState {
        u: Vec<f64>,
        q: Vec<f64>,
        p: Vec<f64>,
        t: [f64; 3],
    }

    impl OwnedState {
        fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
            let mut v = || (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
            let (u, q, p) = (v(), v(), v());
            Self { u, q, p, t: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)] }
        }
        fn zero(n: usize) -> Self {
            Self { u: vec![0.0; n], q: vec![0.0; n], p: vec![0.0; n], t: [0.0; 3] }
        }
        fn view(&self) -> ElementState<'_> {
            ElementState {
                u: &self.u,
                q: &self.q,
                p: &self.p,
                uhat_left: self.t[0],
                uhat_right: self.t[1],
                phat_right: self.t[2],
            }
        }
        /// flat perturbation over `[p, q, u, traces]`
        fn perturbed(&self, idx: usize, eps: f64) -> Self {
            let n = self.u.len();
            let mut s = Self { u: self.u.clone(), q: self.q.clone(), p: self.p.clone(), t: self.t };
            match idx {
                i if i < n => s.p[i] += eps,
                i if i < 2 * n => s.q[i - n] += eps,
                i if i < 3 * n => s.u[i - 2 * n] += eps,
                i => s.t[i - 3 * n] += eps,
            }
            s
        }
    }

    #[test]
    fn piecewise_constant_unit_element() {
        let asm = assembler(0, FluxSpec::ZERO, StabilizationParams::reference());
        let st = OwnedState::zero(1);
        let blk = asm.assemble_local_blocks(&unit_element(), &st.view(), 1.0, &[0.0], &[0.0]).unwrap();
        // a1 = mass of P_0 on [0,1]
        assert_abs_diff_eq!(blk.a[(0, 1)], 1.0, epsilon = 1e-15);
        // b1 = (u, v_x) = 0 for constants
        assert_eq!(blk.a[(0, 2)], 0.0);
        // d1 for the left trace: -<lambda, v n> with n = -1
        assert_eq!(blk.d[(0, UHAT_LEFT)], 1.0);
        assert_eq!(blk.d[(0, UHAT_RIGHT)], -1.0);
        assert!(blk.r.iter().all(|&v| v == 0.0));
        assert!(blk.r_trace.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_time_step_and_sizes() {
        let asm = assembler(1, FluxSpec::ZERO, StabilizationParams::reference());
        let st = OwnedState::zero(2);
        for dt in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                asm.assemble_local_blocks(&unit_element(), &st.view(), dt, &[0.0; 2], &[0.0; 2]),
                Err(HdgError::NonPositiveTimeStep(_))
            ));
        }
        assert!(matches!(
            asm.assemble_local_blocks(&unit_element(), &st.view(), 1.0, &[0.0; 3], &[0.0; 2]),
            Err(HdgError::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    /// Central-difference Jacobian of the residual, over `[p, q, u, u_hat_l, u_hat_r, p_hat_r]`.
    fn fd_jacobian(asm: &LocalAssembler, elem: &Element, st: &OwnedState, dt: f64, s: &[f64], up: &[f64]) -> DMatrix<f64> {
        let n = st.u.len();
        let mut jac = DMatrix::zeros(3 * n + 4, 3 * n + 3);
        let eps = 1e-6;
        for c in 0..3 * n + 3 {
            let plus = st.perturbed(c, eps);
            let minus = st.perturbed(c, -eps);
            let (gp, tp) = asm.residual(elem, &plus.view(), dt, s, up).unwrap();
            let (gm, tm) = asm.residual(elem, &minus.view(), dt, s, up).unwrap();
            for r in 0..3 * n {
                jac[(r, c)] = (gp[r] - gm[r]) / (2.0 * eps);
            }
            for r in 0..4 {
                jac[(3 * n + r, c)] = (tp[r] - tm[r]) / (2.0 * eps);
            }
        }
        jac
    }

    fn analytic_jacobian(b: &LocalBlocks) -> DMatrix<f64> {
        let n3 = b.a.nrows();
        let mut jac = DMatrix::zeros(n3 + 4, n3 + 3);
        jac.view_mut((0, 0), (n3, n3)).copy_from(&b.a);
        jac.view_mut((0, n3), (n3, 3)).copy_from(&b.d);
        jac.view_mut((n3, 0), (4, n3)).copy_from(&b.g);
        jac.view_mut((n3, n3), (4, 3)).copy_from(&b.t);
        jac
    }

    #[test]
    fn newton_blocks_match_residual_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let elem = Element { x_left: 0.2, x_right: 0.45, h: 0.25 };
        let cases = [
            (FluxSpec::new(3.0, 2), TauFRule::DerivativeSquaredPlusQuarter),
            (FluxSpec::new(3.0, 2), TauFRule::Constant(3.0)),
            (FluxSpec::new(-0.5, 3), TauFRule::DerivativeSquaredPlusQuarter),
            (FluxSpec::ZERO, TauFRule::Zero),
        ];
        for k in 0..=3 {
            for &(flux, rule) in &cases {
                let params = StabilizationParams::new(0.3, -1.2, 0.8, 1.25).with_tau_f(rule);
                let asm = assembler(k, flux, params);
                let st = OwnedState::random(k + 1, &mut rng);
                let s: Vec<f64> = (0..=k).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let up: Vec<f64> = (0..=k).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let blk = asm.assemble_local_blocks(&elem, &st.view(), 0.01, &s, &up).unwrap();
                let fd = fd_jacobian(&asm, &elem, &st, 0.01, &s, &up);
                let an = analytic_jacobian(&blk);
                let scale = fd.amax().max(1.0);
                let diff = (&fd - &an).amax();
                assert!(diff <= 1e-7 * scale, "k={k} flux={flux:?} rule={rule:?}: diff {diff:e}\nfd={fd}\nan={an}");
            }
        }
    }

    #[test]
    fn skew_blocks_and_transposition() {
        let asm = assembler(3, FluxSpec::ZERO, StabilizationParams::reference());
        let st = OwnedState::zero(4);
        let elem = Element { x_left: 0.0, x_right: 0.5, h: 0.5 };
        let blk = asm.assemble_local_blocks(&elem, &st.view(), 0.1, &[0.0; 4], &[0.0; 4]).unwrap();
        let b1 = blk.a.view((0, 8), (4, 4)).clone_owned();
        let minus_b1t = blk.a.view((4, 4), (4, 4)).clone_owned();
        assert_eq!(minus_b1t, -b1.transpose());
        assert!(blk.a.view((0, 0), (4, 4)).iter().all(|&v| v == 0.0));
        assert!(blk.a.view((8, 4), (4, 4)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_flux_blocks_ignore_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let asm = assembler(2, FluxSpec::new(0.0, 2), StabilizationParams::reference());
        let elem = Element { x_left: 0.0, x_right: 0.3, h: 0.3 };
        let s1 = OwnedState::random(3, &mut rng);
        let s2 = OwnedState::random(3, &mut rng);
        let z = [0.0; 3];
        let b1 = asm.assemble_local_blocks(&elem, &s1.view(), 0.05, &z, &z).unwrap();
        let b2 = asm.assemble_local_blocks(&elem, &s2.view(), 0.05, &z, &z).unwrap();
        assert_eq!(b1.a, b2.a);
        assert_eq!(b1.d, b2.d);
        assert_eq!(b1.g, b2.g);
        assert_eq!(b1.t, b2.t);
    }

    /// Gaussian elimination of the interior columns of `[[A, D | R], [G, T | R_t]]`,
    /// pivoting only among the interior rows. Returns the reduced `(K, F)`.
    fn dense_block_elimination(b: &LocalBlocks) -> (DMatrix<f64>, DVector<f64>) {
        let n3 = b.a.nrows();
        let mut m = analytic_jacobian(b).insert_column(n3 + 3, 0.0);
        for r in 0..n3 {
            m[(r, n3 + 3)] = b.r[r];
        }
        for r in 0..4 {
            m[(n3 + r, n3 + 3)] = b.r_trace[r];
        }
        for col in 0..n3 {
            let piv = (col..n3).max_by(|&x, &y| m[(x, col)].abs().total_cmp(&m[(y, col)].abs())).unwrap();
            m.swap_rows(col, piv);
            for r in col + 1..n3 + 4 {
                let f = m[(r, col)] / m[(col, col)];
                if f != 0.0 {
                    for c in col..n3 + 4 {
                        let v = m[(col, c)];
                        m[(r, c)] -= f * v;
                    }
                }
            }
        }
        let k = m.view((n3, n3), (4, 3)).clone_owned();
        let f = m.view((n3, n3 + 3), (4, 1)).column(0).clone_owned();
        (k, f)
    }

    #[test]
    fn schur_complement_vanishes_without_coupling() {
        let asm = assembler(1, FluxSpec::ZERO, StabilizationParams::reference());
        let st = OwnedState::zero(2);
        let mut blk = asm.assemble_local_blocks(&unit_element(), &st.view(), 1.0, &[0.0; 2], &[0.0; 2]).unwrap();
        blk.g.fill(0.0);
        let c = condense(&blk, 1).unwrap();
        assert_eq!(c.k_elem, blk.t);
    }

    #[test]
    fn condensation_matches_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let configs = [
            (0usize, Element { x_left: 0.0, x_right: 1.0, h: 1.0 }, 1.0, FluxSpec::ZERO, TauFRule::Zero),
            (1, Element { x_left: 0.0, x_right: 0.5, h: 0.5 }, 0.1, FluxSpec::ZERO, TauFRule::Zero),
            (2, Element { x_left: 0.5, x_right: 0.75, h: 0.25 }, 0.01, FluxSpec::new(3.0, 2), TauFRule::Constant(3.0)),
            (3, Element { x_left: -1.0, x_right: -0.9, h: 0.1 }, 1e-3, FluxSpec::new(3.0, 2), TauFRule::DerivativeSquaredPlusQuarter),
        ];
        for (k, elem, dt, flux, rule) in configs {
            let asm = assembler(k, flux, StabilizationParams::reference().with_tau_f(rule));
            let st = OwnedState::random(k + 1, &mut rng);
            let s: Vec<f64> = (0..=k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let blk = asm.assemble_local_blocks(&elem, &st.view(), dt, &s, &st.u).unwrap();
            let cond = condense(&blk, 1).unwrap();
            let (k_dense, f_dense) = dense_block_elimination(&blk);
            let ks = k_dense.amax().max(1.0);
            for i in 0..4 {
                for j in 0..3 {
                    assert_abs_diff_eq!(cond.k_elem[(i, j)], k_dense[(i, j)], epsilon = 1e-12 * ks);
                }
                assert_abs_diff_eq!(cond.f_elem[i], f_dense[i], epsilon = 1e-12 * f_dense.amax().max(1.0));
            }
        }
    }

    #[test]
    fn recovery_satisfies_uncondensed_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..=3 {
            let asm = assembler(k, FluxSpec::new(3.0, 2), StabilizationParams::reference().with_tau_f(TauFRule::Constant(3.0)));
            let elem = Element { x_left: 0.0, x_right: 0.125, h: 0.125 };
            let st = OwnedState::random(k + 1, &mut rng);
            let s: Vec<f64> = (0..=k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let blk = asm.assemble_local_blocks(&elem, &st.view(), 0.002, &s, &st.u).unwrap();
            let cond = condense(&blk, 1).unwrap();
            let dt = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let inc = cond.recover_interior(&dt);
            let x = DVector::from_iterator(3 * (k + 1), inc.dp.iter().chain(&inc.dq).chain(&inc.du).copied());
            let res = &blk.a * &x + &blk.d * dt - &blk.r;
            let scale = blk.a.amax() * x.amax() + blk.r.amax();
            assert!(res.amax() <= 1e-11 * scale, "k={k} residual {:e}", res.amax());
        }
    }

    #[test]
    fn zero_data_recovers_zero() {
        let asm = assembler(2, FluxSpec::ZERO, StabilizationParams::reference());
        let st = OwnedState::zero(3);
        let blk = asm.assemble_local_blocks(&unit_element(), &st.view(), 0.5, &[0.0; 3], &[0.0; 3]).unwrap();
        let cond = condense(&blk, 1).unwrap();
        let inc = cond.recover_interior(&Vector3::zeros());
        assert!(inc.dp.iter().chain(&inc.dq).chain(&inc.du).all(|&v| v == 0.0));
    }

    #[test]
    fn singular_local_matrix_is_reported() {
        let asm = assembler(1, FluxSpec::ZERO, StabilizationParams::reference());
        let st = OwnedState::zero(2);
        let mut blk = asm.assemble_local_blocks(&unit_element(), &st.view(), 1.0, &[0.0; 2], &[0.0; 2]).unwrap();
        blk.a.row_mut(3).fill(0.0);
        assert!(matches!(condense(&blk, 4), Err(HdgError::SingularLocal { element: 4, .. })));
    }
}
