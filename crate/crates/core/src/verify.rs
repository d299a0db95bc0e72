//! Verification tools: the auxiliary projection, L2 errors, convergence orders and the
//! discrete energy monitor.

use nalgebra::{DMatrix, DVector};

use crate::error::{HdgError, Result};
use crate::flux::StabilizationParams;
use crate::mesh::{Element, Mesh};
use crate::polybasis::ReferenceBasis;
use crate::stepper::TimeScheme;

/// Relative threshold on the singular values of the projection system.
const PROJECTION_SINGULAR_TOL: f64 = 1e-12;

/// `(Pi u, Pi q, Pi p)` on one element together with the residuals of its defining
/// equations, in the order: moments of `u`, `q`, `p`, then the endpoint conditions for
/// `p` and `q` at the left end and for `q` at the right end.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub residuals: [f64; 6],
}

impl ProjectionResult {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Solves the `3(k+1)` projection system on `elem`.
///
/// Unknown order is `[u, q, p]` modal coefficients. Rows `0..k` of each block are the
/// moment conditions against `P_0..P_{k-1}`; the last three rows are the endpoint
/// conditions. Moments of the data use the quadrature of `basis`.
pub fn hdg_projection(
    elem: &Element,
    basis: &ReferenceBasis,
    u: &dyn Fn(f64) -> f64,
    q: &dyn Fn(f64) -> f64,
    p: &dyn Fn(f64) -> f64,
    params: &StabilizationParams,
) -> Result<ProjectionResult> {
    let k = basis.k;
    let nm = k + 1;
    let size = 3 * nm;
    let jac = elem.jacobian();
    let data: [&dyn Fn(f64) -> f64; 3] = [u, q, p];

    let moment = |f: &dyn Fn(f64) -> f64, i: usize| -> f64 {
        (0..basis.num_points())
            .map(|g| basis.weights[g] * f(elem.to_physical(basis.points[g])) * basis.values[(g, i)])
            .sum::<f64>()
            * jac
    };

    let mut m = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    let mut row = 0;
    for (var, f) in data.iter().enumerate() {
        for i in 0..k {
            m[(row, var * nm + i)] = jac * basis.mass_diag(i);
            rhs[row] = moment(*f, i);
            row += 1;
        }
    }
    let (tpu, tqu_p, tqu_m, tqp_m) = (params.tau_pu_plus, params.tau_qu_plus, params.tau_qu_minus, params.tau_qp_minus);
    let (xl, xr) = (elem.x_left, elem.x_right);
    // each endpoint row reads  sum_var c_var * (omega_var - Pi omega_var)(x) = 0
    let endpoint_rows: [([f64; 3], bool); 3] = [
        // delta_p - tau_pu^+ delta_u n at the left end, n = -1
        ([tpu, 0.0, 1.0], true),
        // delta_q - tau_qu^+ delta_u n at the left end
        ([tqu_p, 1.0, 0.0], true),
        // delta_q - tau_qu^- delta_u n - tau_qp^- delta_p n at the right end, n = +1
        ([-tqu_m, 1.0, -tqp_m], false),
    ];
    for (coef, left) in endpoint_rows.iter() {
        let x = if *left { xl } else { xr };
        let vals = if *left { &basis.left_vals } else { &basis.right_vals };
        let mut r = 0.0;
        for var in 0..3 {
            r += coef[var] * (data[var])(x);
            for j in 0..nm {
                m[(row, var * nm + j)] = coef[var] * vals[j];
            }
        }
        rhs[row] = r;
        row += 1;
    }

    let cond_tau = params.projection_determinant();
    let sv = m.clone().singular_values();
    if sv.min() <= PROJECTION_SINGULAR_TOL * sv.max() {
        return Err(HdgError::SingularProjection { cond_tau });
    }
    let sol = m.clone().lu().solve(&rhs).ok_or(HdgError::SingularProjection { cond_tau })?;

    let res = &m * &sol - &rhs;
    let scale = rhs.amax().max(1.0);
    let block = |range: std::ops::Range<usize>| res.rows(range.start, range.len()).amax() / scale;
    let residuals = [
        if k > 0 { block(0..k) } else { 0.0 },
        if k > 0 { block(k..2 * k) } else { 0.0 },
        if k > 0 { block(2 * k..3 * k) } else { 0.0 },
        res[3 * k].abs() / scale,
        res[3 * k + 1].abs() / scale,
        res[3 * k + 2].abs() / scale,
    ];
    Ok(ProjectionResult {
        u: sol.rows(0, nm).iter().copied().collect(),
        q: sol.rows(nm, nm).iter().copied().collect(),
        p: sol.rows(2 * nm, nm).iter().copied().collect(),
        residuals,
    })
}

/// Projection on every element of `mesh`.
pub fn hdg_projection_mesh(
    mesh: &Mesh,
    basis: &ReferenceBasis,
    u: &dyn Fn(f64) -> f64,
    q: &dyn Fn(f64) -> f64,
    p: &dyn Fn(f64) -> f64,
    params: &StabilizationParams,
) -> Result<Vec<ProjectionResult>> {
    mesh.elements().map(|el| hdg_projection(&el, basis, u, q, p, params)).collect()
}

/// `sqrt(sum_e int_{I_e} (field - exact)^2)` with the quadrature of `basis`.
///
/// `basis` should be the elevated rule of the solver so that the error of a degree `k`
/// field against smooth data is integrated accurately.
pub fn l2_error(coeffs: &[Vec<f64>], exact: &dyn Fn(f64) -> f64, mesh: &Mesh, basis: &ReferenceBasis) -> f64 {
    mesh.elements()
        .zip(coeffs)
        .map(|(el, c)| {
            let vals = basis.eval_at_points(c);
            basis
                .points
                .iter()
                .zip(&basis.weights)
                .zip(vals)
                .map(|((&xh, &w), v)| {
                    let d = v - exact(el.to_physical(xh));
                    w * d * d
                })
                .sum::<f64>()
                * el.jacobian()
        })
        .sum::<f64>()
        .sqrt()
}

/// Discrete L2 norm of a piecewise polynomial, computed from the modal mass matrix.
pub fn l2_norm(coeffs: &[Vec<f64>], mesh: &Mesh) -> f64 {
    mesh.elements()
        .zip(coeffs)
        .map(|(el, c)| {
            c.iter().enumerate().map(|(j, v)| v * v * 2.0 / (2 * j + 1) as f64).sum::<f64>() * el.jacobian()
        })
        .sum::<f64>()
        .sqrt()
}

/// Observed orders `log(e_{j-1}/e_j) / log(h_{j-1}/h_j)` between consecutive levels.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() {
        return Err(HdgError::DimensionMismatch { expected: hs.len(), found: errors.len() });
    }
    if errors.len() < 2 {
        return Err(HdgError::InvalidInput("need at least two levels".into()));
    }
    if let Some(bad) = errors.iter().chain(hs).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(HdgError::InvalidInput(format!("nonpositive entry {bad} in order computation")));
    }
    let orders = errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    Ok(orders)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(HdgError::InvalidInput("slope fit needs two or more matching points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(HdgError::InvalidInput("slope fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// `||u_h(t_j)||` for every stored step.
pub fn energy_monitor(history: &[Vec<Vec<f64>>], mesh: &Mesh) -> Vec<f64> {
    history.iter().map(|u| l2_norm(u, mesh)).collect()
}

/// Coefficients of `(u^{j+1} - u^j) / dt`.
pub fn difference_quotient(next: &[Vec<f64>], prev: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    next.iter()
        .zip(prev)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) / dt).collect())
        .collect()
}

/// Errors on one mesh level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: u32,
    pub num_elements: usize,
    pub h: f64,
    pub dt: f64,
    pub e_u: f64,
    pub e_q: f64,
    pub e_p: f64,
    pub e_ut: Option<f64>,
    pub order_u: Option<f64>,
    pub order_q: Option<f64>,
    pub order_p: Option<f64>,
    pub order_ut: Option<f64>,
    /// Smallest and largest Newton iteration counts over all stages of the run.
    pub min_newton: usize,
    pub max_newton: usize,
}

/// Convergence table of one study.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub k: usize,
    pub params: StabilizationParams,
    pub dt_rule: String,
    pub scheme: TimeScheme,
    pub final_time: f64,
    pub levels: Vec<LevelRecord>,
}

impl ExperimentReport {
    /// Fills in the order columns from consecutive levels.
    pub fn compute_orders(&mut self) {
        for j in 1..self.levels.len() {
            let (a, b) = (&self.levels[j - 1], &self.levels[j]);
            let r = (a.h / b.h).ln();
            let ord = |x: f64, y: f64| if x > 0.0 && y > 0.0 { Some((x / y).ln() / r) } else { None };
            let (ou, oq, op) = (ord(a.e_u, b.e_u), ord(a.e_q, b.e_q), ord(a.e_p, b.e_p));
            let out = match (a.e_ut, b.e_ut) {
                (Some(x), Some(y)) => ord(x, y),
                _ => None,
            };
            let l = &mut self.levels[j];
            l.order_u = ou;
            l.order_q = oq;
            l.order_p = op;
            l.order_ut = out;
        }
    }

    pub fn finest(&self) -> Option<&LevelRecord> {
        self.levels.last()
    }

    /// Table in the layout `k | h | e_u order | e_q order | e_p order`.
    pub fn format_table(&self) -> String {
        let ord = |o: Option<f64>| o.map(|v| format!("{v:5.2}")).unwrap_or_else(|| "    -".into());
        let mut s = format!(
            "k = {}  scheme = {:?}  T = {}  dt = {}\n{:>6} {:>10} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6}\n",
            self.k, self.scheme, self.final_time, self.dt_rule, "level", "h", "e_u", "order", "e_q", "order", "e_p", "order"
        );
        for l in &self.levels {
            s.push_str(&format!(
                "{:>6} {:>10.3e} {:>10.2e} {} {:>10.2e} {} {:>10.2e} {}\n",
                l.level,
                l.h,
                l.e_u,
                ord(l.order_u),
                l.e_q,
                ord(l.order_q),
                l.e_p,
                ord(l.order_p)
            ));
        }
        s
    }
}
