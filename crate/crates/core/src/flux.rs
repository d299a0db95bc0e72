//! The nonlinear flux `F(u) = beta u^m` and the stabilization constants of the numerical traces.

/// Polynomial flux `F(u) = beta * u^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxSpec {
    pub beta: f64,
    pub m: u32,
}

impl FluxSpec {
    pub const ZERO: FluxSpec = FluxSpec { beta: 0.0, m: 0 };

    pub fn new(beta: f64, m: u32) -> Self {
        Self { beta, m }
    }

    /// True when `F` is constant in `u`, so the discretization is affine.
    pub fn is_linear(&self) -> bool {
        self.beta == 0.0 || self.m <= 1
    }

    pub fn value(&self, u: f64) -> f64 {
        self.beta * powu(u, self.m)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self.m {
            0 => 0.0,
            m => self.beta * m as f64 * powu(u, m - 1),
        }
    }

    pub fn second_derivative(&self, u: f64) -> f64 {
        match self.m {
            0 | 1 => 0.0,
            m => self.beta * (m * (m - 1)) as f64 * powu(u, m - 2),
        }
    }

    /// `tilde_tau(u, u_hat) = (u - u_hat)^{-2} * int_{u_hat}^{u} (F(s) - F(u_hat)) n ds`.
    ///
    /// Evaluated through the binomial expansion of `s^{m+1}` around `u_hat`, which removes
    /// the cancellation near `u = u_hat`. Below `|u - u_hat| < 1e-12` the limit
    /// `n F'(u_hat) / 2` is returned.
    pub fn tau_tilde(&self, u: f64, u_hat: f64, n: f64) -> f64 {
        let d = u - u_hat;
        if d.abs() < 1e-12 {
            return 0.5 * n * self.derivative(u_hat);
        }
        let m1 = self.m as u64 + 1;
        let mut sum = 0.0;
        for r in 2..=m1 {
            sum += binomial(m1, r) * powu(u_hat, (m1 - r) as u32) * powu(d, (r - 2) as u32);
        }
        n * self.beta * sum / m1 as f64
    }
}

fn powu(x: f64, e: u32) -> f64 {
    x.powi(e as i32)
}

fn binomial(n: u64, r: u64) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// How the flux stabilization `tau_F(u_hat, u)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauFRule {
    Zero,
    Constant(f64),
    /// `tau_F = F'(u_hat)^2 + 1/4`
    DerivativeSquaredPlusQuarter,
}

/// The four trace constants plus the flux stabilization rule.
///
/// `tau_qu_plus` and `tau_pu_plus` act at the left endpoint `x_{i-1}^+` of each element,
/// `tau_qu_minus` and `tau_qp_minus` at the right endpoint `x_i^-`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationParams {
    pub tau_qu_plus: f64,
    pub tau_pu_plus: f64,
    pub tau_qu_minus: f64,
    pub tau_qp_minus: f64,
    pub tau_f: TauFRule,
}

impl StabilizationParams {
    pub fn new(tau_qu_plus: f64, tau_pu_plus: f64, tau_qu_minus: f64, tau_qp_minus: f64) -> Self {
        Self { tau_qu_plus, tau_pu_plus, tau_qu_minus, tau_qp_minus, tau_f: TauFRule::Zero }
    }

    /// `(0, -1, 1, 1)` with `tau_F = 0`, used by all the reference experiments.
    pub fn reference() -> Self {
        Self::new(0.0, -1.0, 1.0, 1.0)
    }

    pub fn with_tau_f(mut self, rule: TauFRule) -> Self {
        self.tau_f = rule;
        self
    }

    /// `tau_qu^+ + tau_qu^- - tau_pu^+ tau_qp^-`; the auxiliary projection is well defined iff nonzero.
    pub fn projection_determinant(&self) -> f64 {
        self.tau_qu_plus + self.tau_qu_minus - self.tau_pu_plus * self.tau_qp_minus
    }

    pub fn tau_f_value(&self, flux: &FluxSpec, u_hat: f64, _u: f64) -> f64 {
        match self.tau_f {
            TauFRule::Zero => 0.0,
            TauFRule::Constant(c) => c,
            TauFRule::DerivativeSquaredPlusQuarter => {
                let d = flux.derivative(u_hat);
                d * d + 0.25
            }
        }
    }

    /// Partials of `tau_F` with respect to `u_hat` (first) and `u` (second).
    pub fn tau_f_partials(&self, flux: &FluxSpec, u_hat: f64, _u: f64) -> (f64, f64) {
        match self.tau_f {
            TauFRule::Zero | TauFRule::Constant(_) => (0.0, 0.0),
            TauFRule::DerivativeSquaredPlusQuarter => {
                (2.0 * flux.derivative(u_hat) * flux.second_derivative(u_hat), 0.0)
            }
        }
    }
}

/// Which of the admissibility conditions a parameter set satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilityReport {
    /// Energy stability for the nonlinear problem, given a lower bound on `tau_F - tilde_tau`.
    pub satisfies_ntau_cond: bool,
    /// Energy stability when `F = 0`.
    pub satisfies_tau_cond: bool,
    /// Optimal-convergence condition for linear problems.
    pub satisfies_tau_cond_new: bool,
    /// Well-posedness of the auxiliary projection.
    pub satisfies_cond_tau: bool,
}

impl StabilityReport {
    pub fn all(&self) -> bool {
        self.satisfies_ntau_cond
            && self.satisfies_tau_cond
            && self.satisfies_tau_cond_new
            && self.satisfies_cond_tau
    }
}

const CHECK_TOL: f64 = 1e-12;

/// Evaluates the admissibility conditions for the trace constants.
///
/// `delta` is a caller-supplied lower bound on `tau_F - tilde_tau` over the solution range.
pub fn check_stability_conditions(params: &StabilizationParams, delta: f64) -> StabilityReport {
    let StabilizationParams { tau_qu_plus: qu_p, tau_pu_plus: pu_p, tau_qu_minus: qu_m, tau_qp_minus: qp_m, .. } =
        *params;
    let ge0 = |v: f64| v >= -CHECK_TOL;

    let satisfies_ntau_cond = ge0(delta - pu_p - 0.5 * qu_p * qu_p)
        && ge0(delta + 0.5 * qu_m * qu_m)
        && ge0(delta * qp_m * qp_m + qu_m * qp_m - 0.5);

    let satisfies_tau_cond = ge0(-pu_p - 0.5 * qu_p * qu_p) && ge0(qu_m * qp_m - 0.5);

    let satisfies_tau_cond_new = qu_m > 0.0
        && (qu_m * qp_m - 1.0).abs() <= CHECK_TOL
        && (-CHECK_TOL..=1.0 + CHECK_TOL).contains(&qu_p)
        && {
            let lo = -1.0 - (1.0 - qu_p * qu_p).max(0.0).sqrt();
            let hi = -0.5 - 0.5 * qu_p * qu_p;
            pu_p >= lo - CHECK_TOL && pu_p <= hi + CHECK_TOL
        };

    let det = params.projection_determinant();
    let scale = 1.0 + qu_p.abs() + qu_m.abs() + (pu_p * qp_m).abs();
    let satisfies_cond_tau = det.abs() > CHECK_TOL * scale;

    StabilityReport { satisfies_ntau_cond, satisfies_tau_cond, satisfies_tau_cond_new, satisfies_cond_tau }
}
