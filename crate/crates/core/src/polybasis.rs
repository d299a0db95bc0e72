//! Legendre modal basis and Gauss-Legendre quadrature on the reference element `[-1, 1]`.

use crate::error::{HdgError, Result};
use nalgebra::DMatrix;

/// Values and derivatives of `P_0..=P_k` at `x` via the three-term recurrence.
pub fn legendre_with_derivative(k: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; k + 1];
    let mut dp = vec![0.0; k + 1];
    p[0] = 1.0;
    if k >= 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for n in 1..k {
        let nf = n as f64;
        p[n + 1] = ((2.0 * nf + 1.0) * x * p[n] - nf * p[n - 1]) / (nf + 1.0);
        // P'_{n+1} = P'_{n-1} + (2n+1) P_n
        dp[n + 1] = dp[n - 1] + (2.0 * nf + 1.0) * p[n];
    }
    (p, dp)
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`, exact for polynomials of degree `2n - 1`.
pub fn gauss_quadrature(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(HdgError::EmptyQuadrature);
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dpn = 1.0;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            dpn = dp[n];
            let dx = p[n] / dpn;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        dpn = if dp[n] != 0.0 { dp[n] } else { dpn };
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        points[i] = -x;
        points[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok((points, weights))
}

/// Quadrature count that integrates `F(u_h) w_x` exactly for `F(u) = beta u^m`.
pub fn default_quadrature_points(k: usize, m: u32) -> usize {
    let nonlinear = ((m as usize + 2) * k).div_ceil(2) + 1;
    (k + 2).max(nonlinear)
}

/// Precomputed reference-element data for `P_k`.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    pub k: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// `values[(q, j)] = P_j(points[q])`
    pub values: DMatrix<f64>,
    /// `derivs[(q, j)] = P_j'(points[q])` in the reference coordinate
    pub derivs: DMatrix<f64>,
    pub left_vals: Vec<f64>,
    pub right_vals: Vec<f64>,
    /// `(P_j, P_i')` on `[-1, 1]`, row = test index `i`, column = trial index `j`.
    /// Invariant under the affine map, since the Jacobian cancels the chain rule.
    pub convection: DMatrix<f64>,
}

impl ReferenceBasis {
    pub fn new(k: usize, n_q: usize) -> Result<Self> {
        if n_q < k + 1 {
            return Err(HdgError::UnderIntegratedBasis { degree: k, points: n_q });
        }
        let (points, weights) = gauss_quadrature(n_q)?;
        let mut values = DMatrix::zeros(n_q, k + 1);
        let mut derivs = DMatrix::zeros(n_q, k + 1);
        for (q, &x) in points.iter().enumerate() {
            let (p, dp) = legendre_with_derivative(k, x);
            for j in 0..=k {
                values[(q, j)] = p[j];
                derivs[(q, j)] = dp[j];
            }
        }
        let right_vals = vec![1.0; k + 1];
        let left_vals = (0..=k).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();

        // exact analytic form: (P_j, P_i') = 2 when i > j and i + j odd, else 0
        let convection = DMatrix::from_fn(k + 1, k + 1, |i, j| {
            if i > j && (i + j) % 2 == 1 {
                2.0
            } else {
                0.0
            }
        });

        Ok(Self { k, points, weights, values, derivs, left_vals, right_vals, convection })
    }

    /// Basis built with `n_q` extra points on top of an existing rule.
    pub fn elevated(&self, extra: usize) -> Self {
        Self::new(self.k, self.points.len() + extra).expect("elevated rule has more points")
    }

    pub fn num_modes(&self) -> usize {
        self.k + 1
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    /// `(P_j, P_j)` on the reference element.
    pub fn mass_diag(&self, j: usize) -> f64 {
        2.0 / (2.0 * j as f64 + 1.0)
    }

    /// Field value at each quadrature point.
    pub fn eval_at_points(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.num_points())
            .map(|q| (0..=self.k).map(|j| self.values[(q, j)] * coeffs[j]).sum())
            .collect()
    }

    pub fn left_value(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().zip(&self.left_vals).map(|(c, v)| c * v).sum()
    }

    pub fn right_value(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().sum()
    }
}

/// `sum_j c_j P_j(x_hat)`.
pub fn eval_field_on_element(coeffs: &[f64], x_hat: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let (p, _) = legendre_with_derivative(coeffs.len() - 1, x_hat);
    coeffs.iter().zip(&p).map(|(c, v)| c * v).sum()
}
