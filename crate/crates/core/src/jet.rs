//! Truncated Taylor arithmetic up to third order, used to differentiate closed-form
//! solutions in space.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Taylor coefficients `[f, f', f''/2, f'''/6]` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet(pub [f64; 4]);

impl Jet {
    pub fn constant(c: f64) -> Self {
        Jet([c, 0.0, 0.0, 0.0])
    }

    /// The independent variable at `x`.
    pub fn variable(x: f64) -> Self {
        Jet([x, 1.0, 0.0, 0.0])
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// `n`-th derivative, `n <= 3`.
    pub fn derivative(&self, n: usize) -> f64 {
        const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];
        self.0[n] * FACT[n]
    }

    pub fn scale(self, s: f64) -> Self {
        Jet(self.0.map(|c| c * s))
    }

    pub fn recip(self) -> Self {
        let a = self.0;
        let mut b = [0.0; 4];
        b[0] = 1.0 / a[0];
        for n in 1..4 {
            let s: f64 = (1..=n).map(|i| a[i] * b[n - i]).sum();
            b[n] = -s * b[0];
        }
        Jet(b)
    }

    pub fn exp(self) -> Self {
        let a = self.0;
        let mut e = [0.0; 4];
        e[0] = a[0].exp();
        for n in 1..4 {
            let s: f64 = (1..=n).map(|i| i as f64 * a[i] * e[n - i]).sum();
            e[n] = s / n as f64;
        }
        Jet(e)
    }

    pub fn sinh(self) -> Self {
        let (p, m) = (self.exp(), (-self).exp());
        (p - m).scale(0.5)
    }

    pub fn cosh(self) -> Self {
        let (p, m) = (self.exp(), (-self).exp());
        (p + m).scale(0.5)
    }

    pub fn tanh(self) -> Self {
        // 1 - 2/(e^{2x} + 1), stable for either sign
        if self.0[0] >= 0.0 {
            let e = (-self.scale(2.0)).exp();
            (Jet::constant(1.0) - e) / (Jet::constant(1.0) + e)
        } else {
            let e = self.scale(2.0).exp();
            (e - Jet::constant(1.0)) / (e + Jet::constant(1.0))
        }
    }

    pub fn sech(self) -> Self {
        // 2 e^{-|x|} / (1 + e^{-2|x|})
        let s = if self.0[0] >= 0.0 { -self } else { self };
        let e = s.exp();
        e.scale(2.0) / (Jet::constant(1.0) + e * e)
    }

    pub fn sin(self) -> Self {
        let a = self.0;
        let (s, c) = a[0].sin_cos();
        // compose with the Taylor series of sin around a[0]
        let d = Jet([0.0, a[1], a[2], a[3]]);
        let d2 = d * d;
        let d3 = d2 * d;
        Jet::constant(s) + d.scale(c) - d2.scale(0.5 * s) - d3.scale(c / 6.0)
    }

    pub fn cos(self) -> Self {
        let a = self.0;
        let (s, c) = a[0].sin_cos();
        let d = Jet([0.0, a[1], a[2], a[3]]);
        let d2 = d * d;
        let d3 = d2 * d;
        Jet::constant(c) - d.scale(s) - d2.scale(0.5 * c) + d3.scale(s / 6.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2], self.0[3] + o.0[3]])
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self.0, o.0);
        let mut c = [0.0; 4];
        for (n, cn) in c.iter_mut().enumerate() {
            *cn = (0..=n).map(|i| a[i] * b[n - i]).sum();
        }
        Jet(c)
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, c: f64) -> Jet {
        self + Jet::constant(c)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}
