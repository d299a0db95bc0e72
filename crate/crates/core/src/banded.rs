//! Banded LU factorization with partial pivoting.

use crate::error::{HdgError, Result};
use nalgebra::DMatrix;

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Rows keep room for `kl` extra super-diagonals, the fill produced by row interchanges.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Self {
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    fn in_storage(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku + self.kl
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics when `(i, j)` is outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band (kl={}, ku={})", self.kl, self.ku);
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Panics when `(i, j)` is outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band (kl={}, ku={})", self.kl, self.ku);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn set_unit_row(&mut self, i: usize) {
        for j in i.saturating_sub(self.kl)..=(i + self.ku).min(self.n - 1) {
            self.set(i, j, 0.0);
        }
        self.set(i, i, 1.0);
    }

    pub fn row_range(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        i.saturating_sub(self.kl)..=(i + self.ku).min(self.n - 1)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// LU factorization with partial pivoting (interchanges restricted to the `kl` rows
    /// that can hold a nonzero in the pivot column).
    pub fn factorize(&self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut a = self.clone();
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut pivots = vec![0usize; n];
        let mut mult = vec![0.0; n * kl.max(1)];
        for c in 0..n {
            let last_row = (c + kl).min(n - 1);
            let last_col = (c + kl + ku).min(n - 1);
            let p = (c..=last_row)
                .max_by(|&x, &y| a.data[a.idx(x, c)].abs().total_cmp(&a.data[a.idx(y, c)].abs()))
                .unwrap_or(c);
            let piv = a.data[a.idx(p, c)];
            if piv == 0.0 || !piv.is_finite() || piv.abs() <= 1e-15 * scale {
                return Err(HdgError::SingularGlobal { row: c });
            }
            pivots[c] = p;
            if p != c {
                for j in c..=last_col {
                    let (ic, ip) = (a.idx(c, j), a.idx(p, j));
                    a.data.swap(ic, ip);
                }
            }
            for r in c + 1..=last_row {
                let ir = a.idx(r, c);
                let m = a.data[ir] / piv;
                mult[c * kl + (r - c - 1)] = m;
                a.data[ir] = 0.0;
                if m != 0.0 {
                    for j in c + 1..=last_col {
                        debug_assert!(a.in_storage(r, j) && a.in_storage(c, j));
                        let v = a.data[a.idx(c, j)];
                        let ir = a.idx(r, j);
                        a.data[ir] -= m * v;
                    }
                }
            }
        }
        Ok(BandLu { lu: a, pivots, mult })
    }
}

/// Factors of a [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
    pivots: Vec<usize>,
    mult: Vec<f64>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let a = &self.lu;
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let mut x = rhs.to_vec();
        for c in 0..n {
            x.swap(c, self.pivots[c]);
            let xc = x[c];
            for r in c + 1..=(c + kl).min(n.saturating_sub(1)) {
                x[r] -= self.mult[c * kl + (r - c - 1)] * xc;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + kl + ku).min(n - 1) {
                s -= a.data[a.idx(i, j)] * x[j];
            }
            x[i] = s / a.data[a.idx(i, i)];
        }
        x
    }
}
