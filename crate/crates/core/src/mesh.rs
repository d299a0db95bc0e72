//! One-dimensional partitions of `(a, b)`.

use crate::error::{HdgError, Result};

/// An ordered partition `a = x_0 < x_1 < ... < x_N = b`.
///
/// Element `i` (1-based) is the interval `(x_{i-1}, x_i)`. The outward normal is
/// `-1` at the left endpoint of an element and `+1` at its right endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
}

/// Geometry of a single element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub x_left: f64,
    pub x_right: f64,
    pub h: f64,
}

impl Element {
    /// Maps a reference coordinate in `[-1, 1]` onto the element.
    pub fn to_physical(&self, x_hat: f64) -> f64 {
        0.5 * (self.x_left + self.x_right) + 0.5 * self.h * x_hat
    }

    pub fn jacobian(&self) -> f64 {
        0.5 * self.h
    }
}

impl Mesh {
    /// Uniform partition of `(a, b)` into `n` elements.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(HdgError::InvalidMesh(format!("need a < b, got a = {a}, b = {b}")));
        }
        if n == 0 {
            return Err(HdgError::InvalidMesh("need at least one element".into()));
        }
        let h = (b - a) / n as f64;
        let mut nodes: Vec<f64> = (0..=n).map(|i| a + i as f64 * h).collect();
        // pin the right endpoint exactly
        nodes[n] = b;
        Ok(Self { nodes })
    }

    /// General partition from strictly increasing nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(HdgError::InvalidMesh("need at least two nodes".into()));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(HdgError::InvalidMesh("nodes must be finite".into()));
        }
        if let Some(w) = nodes.windows(2).find(|w| w[1] <= w[0]) {
            return Err(HdgError::InvalidMesh(format!(
                "nodes must be strictly increasing ({} followed by {})",
                w[0], w[1]
            )));
        }
        Ok(Self { nodes })
    }

    pub fn a(&self) -> f64 {
        self.nodes[0]
    }

    pub fn b(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Number of elements `N`.
    pub fn num_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Maximum element size.
    pub fn h_max(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Element `i`, 1-based: `(x_{i-1}, x_i, h_i)`.
    pub fn element_of(&self, i: usize) -> Result<Element> {
        let count = self.num_elements();
        if i == 0 || i > count {
            return Err(HdgError::ElementOutOfRange { index: i, count });
        }
        Ok(self.element(i - 1))
    }

    /// Element by 0-based storage index. Panics when out of range.
    pub fn element(&self, idx: usize) -> Element {
        let x_left = self.nodes[idx];
        let x_right = self.nodes[idx + 1];
        Element { x_left, x_right, h: x_right - x_left }
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        (0..self.num_elements()).map(|i| self.element(i))
    }
}
