//! The globally coupled trace system.
//!
//! Trace unknowns are interleaved as `[u_hat_0, p_hat_1, u_hat_1, ..., p_hat_N, u_hat_N]`.
//! Row `2i - 1` holds the `q_hat` transmission (or Neumann) condition at node `x_i`,
//! row `2i` the `p_hat + F_hat` transmission condition at interior node `x_i`, and rows
//! `0` and `2N` pin the Dirichlet data. Every row couples the five unknowns
//! `u_hat_{i-1}, p_hat_i, u_hat_i, p_hat_{i+1}, u_hat_{i+1}` around its node.

use crate::banded::BandMatrix;
use crate::error::{HdgError, Result};
use crate::local::{CondensedElement, CHI_LEFT, CHI_RIGHT, MU_LEFT, MU_RIGHT, PHAT_RIGHT, UHAT_LEFT, UHAT_RIGHT};
use nalgebra::{DMatrix, Vector4};

/// Sub-diagonals of the assembled trace matrix.
pub const LOWER_BANDWIDTH: usize = 2;
/// Super-diagonals of the assembled trace matrix (the `q_hat` row at `x_i` sits one
/// position before the node's `u_hat_i` column).
pub const UPPER_BANDWIDTH: usize = 3;

/// Index map for the `2N + 1` trace unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceLayout {
    pub num_elements: usize,
}

impl TraceLayout {
    pub fn new(num_elements: usize) -> Self {
        Self { num_elements }
    }

    pub fn size(&self) -> usize {
        2 * self.num_elements + 1
    }

    /// Position of `u_hat` at node `x_i`, `0 <= i <= N`.
    pub fn uhat(&self, i: usize) -> usize {
        2 * i
    }

    /// Position of `p_hat^-` at node `x_i`, `1 <= i <= N`.
    pub fn phat(&self, i: usize) -> usize {
        debug_assert!(i >= 1);
        2 * i - 1
    }

    /// Global columns of element `e` (1-based), in local trace order.
    pub fn element_columns(&self, e: usize) -> [usize; 3] {
        let mut cols = [0; 3];
        cols[UHAT_LEFT] = self.uhat(e - 1);
        cols[UHAT_RIGHT] = self.uhat(e);
        cols[PHAT_RIGHT] = self.phat(e);
        cols
    }

    /// Global rows of element `e`'s four trace equations; `None` for rows that do not
    /// exist (no `q_hat` condition at `a`, no `p_hat + F_hat` condition at `a` or `b`).
    pub fn element_rows(&self, e: usize) -> [Option<usize>; 4] {
        let n = self.num_elements;
        let mut rows = [None; 4];
        if e >= 2 {
            rows[MU_LEFT] = Some(self.phat(e - 1));
            rows[CHI_LEFT] = Some(self.uhat(e - 1));
        }
        rows[MU_RIGHT] = Some(self.phat(e));
        if e < n {
            rows[CHI_RIGHT] = Some(self.uhat(e));
        }
        rows
    }
}

/// Trace values in the interleaved layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceVector {
    pub values: Vec<f64>,
}

impl TraceVector {
    pub fn zeros(num_elements: usize) -> Self {
        Self { values: vec![0.0; TraceLayout::new(num_elements).size()] }
    }

    pub fn num_elements(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn uhat(&self, i: usize) -> f64 {
        self.values[2 * i]
    }

    pub fn phat(&self, i: usize) -> f64 {
        self.values[2 * i - 1]
    }

    pub fn set_uhat(&mut self, i: usize, v: f64) {
        self.values[2 * i] = v;
    }

    pub fn set_phat(&mut self, i: usize, v: f64) {
        self.values[2 * i - 1] = v;
    }
}

/// Boundary data at the time the system is assembled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryData {
    pub u_left: f64,
    pub u_right: f64,
    pub q_right: f64,
}

/// `K [d u_hat; d p_hat] = F`.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub matrix: BandMatrix,
    pub rhs: Vec<f64>,
}

/// Scatters element trace-row vectors (already signed as right-hand sides) and imposes the
/// boundary rows. Used both for the condensed right-hand side and for the Newton residual.
pub fn scatter_trace_rows(
    contributions: &[Vector4<f64>],
    bc: &BoundaryData,
    current: &TraceVector,
) -> Result<Vec<f64>> {
    let n = contributions.len();
    if current.values.len() != 2 * n + 1 {
        return Err(HdgError::DimensionMismatch { expected: 2 * n + 1, found: current.values.len() });
    }
    let layout = TraceLayout::new(n);
    let mut rhs = vec![0.0; layout.size()];
    for (idx, c) in contributions.iter().enumerate() {
        for (local, row) in layout.element_rows(idx + 1).iter().enumerate() {
            if let Some(r) = row {
                rhs[*r] += c[local];
            }
        }
    }
    rhs[layout.phat(n)] += bc.q_right;
    rhs[layout.uhat(0)] = bc.u_left - current.uhat(0);
    rhs[layout.uhat(n)] = bc.u_right - current.uhat(n);
    Ok(rhs)
}

/// Assembles the condensed trace system.
pub fn assemble_global(
    elements: &[CondensedElement],
    bc: &BoundaryData,
    current: &TraceVector,
) -> Result<GlobalSystem> {
    let n = elements.len();
    if n == 0 {
        return Err(HdgError::InvalidInput("no elements".into()));
    }
    let layout = TraceLayout::new(n);
    let mut matrix = BandMatrix::zeros(layout.size(), LOWER_BANDWIDTH, UPPER_BANDWIDTH);
    for (idx, el) in elements.iter().enumerate() {
        let rows = layout.element_rows(idx + 1);
        let cols = layout.element_columns(idx + 1);
        for (li, row) in rows.iter().enumerate() {
            if let Some(r) = row {
                for (lj, &c) in cols.iter().enumerate() {
                    matrix.add(*r, c, el.k_elem[(li, lj)]);
                }
            }
        }
    }
    matrix.set_unit_row(layout.uhat(0));
    matrix.set_unit_row(layout.uhat(n));
    let f: Vec<Vector4<f64>> = elements.iter().map(|e| e.f_elem).collect();
    let rhs = scatter_trace_rows(&f, bc, current)?;
    Ok(GlobalSystem { matrix, rhs })
}

/// Solves the trace system with banded LU.
pub fn solve_banded(sys: &GlobalSystem) -> Result<Vec<f64>> {
    if sys.rhs.len() != sys.matrix.size() {
        return Err(HdgError::DimensionMismatch { expected: sys.matrix.size(), found: sys.rhs.len() });
    }
    Ok(sys.matrix.factorize()?.solve(&sys.rhs))
}

/// Default cap on the dense conversion used by [`condition_estimate`].
pub const DEFAULT_CONDITION_CAP: usize = 4001;

/// 2-norm condition number from the extreme singular values of the dense matrix.
pub fn condition_estimate(sys: &GlobalSystem, cap: usize) -> Result<f64> {
    condition_of_dense(sys.matrix.to_dense(), cap)
}

/// Same as [`condition_estimate`] with the two Dirichlet rows and columns removed.
pub fn condition_estimate_without_dirichlet(sys: &GlobalSystem, cap: usize) -> Result<f64> {
    let m = sys.matrix.size();
    let dense = sys.matrix.to_dense().remove_row(m - 1).remove_column(m - 1).remove_row(0).remove_column(0);
    condition_of_dense(dense, cap)
}

fn condition_of_dense(dense: DMatrix<f64>, cap: usize) -> Result<f64> {
    let size = dense.nrows();
    if size > cap {
        return Err(HdgError::ConditionCapExceeded { size, cap });
    }
    let sv = dense.singular_values();
    let max = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    let min = sv.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

/// Largest `last_nonzero - first_nonzero` span over all rows, divided by two
/// (2 for a five-unknown stencil).
pub fn stencil_half_width(matrix: &BandMatrix) -> usize {
    (0..matrix.size())
        .filter_map(|i| {
            let nz: Vec<usize> = matrix.row_range(i).filter(|&j| matrix.get(i, j) != 0.0).collect();
            Some((nz.last()? - nz.first()?).div_ceil(2))
        })
        .max()
        .unwrap_or(0)
}

/// Measured `(lower, upper)` bandwidth: furthest nonzero below and above the diagonal.
pub fn measured_bandwidth(matrix: &BandMatrix) -> (usize, usize) {
    let mut lo = 0;
    let mut up = 0;
    for i in 0..matrix.size() {
        for j in matrix.row_range(i) {
            if matrix.get(i, j) != 0.0 {
                if j < i {
                    lo = lo.max(i - j);
                } else {
                    up = up.max(j - i);
                }
            }
        }
    }
    (lo, up)
}
