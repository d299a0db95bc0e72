//! Closed-form solutions and the reference problems built from them.

use std::sync::Arc;

use crate::flux::FluxSpec;
use crate::jet::Jet;
use crate::stepper::{ExactFields, ProblemSpec};

/// `u = sin(x + t)` for `u_t + u_xxx = 0` on `(0, 1)`.
pub fn linear_trig_problem() -> ProblemSpec {
    let exact = ExactFields {
        u: Arc::new(|x, t| (x + t).sin()),
        q: Arc::new(|x, t| (x + t).cos()),
        p: Arc::new(|x, t| -(x + t).sin()),
        u_t: Some(Arc::new(|x, t| (x + t).cos())),
    };
    // u_t + u_xxx = cos(x+t) - cos(x+t)
    let mut pb = ProblemSpec::from_exact(0.0, 1.0, FluxSpec::ZERO, Arc::new(|_, _| 0.0), exact);
    pb.initial_dxxx = Some(Arc::new(|x: f64| -x.cos()));
    pb
}

/// Manufactured source for `u = sin(2x + t)` with `F(u) = 3u^2`.
pub fn nonlinear_trig_source(x: f64, t: f64) -> f64 {
    let s = 2.0 * x + t;
    -7.0 * s.cos() + 6.0 * (2.0 * s).sin()
}

/// `u = sin(2x + t)` for `u_t + u_xxx + (3u^2)_x = f` on `(0, pi)`.
pub fn nonlinear_trig_problem() -> ProblemSpec {
    let exact = ExactFields {
        u: Arc::new(|x, t| (2.0 * x + t).sin()),
        q: Arc::new(|x, t| 2.0 * (2.0 * x + t).cos()),
        p: Arc::new(|x, t| -4.0 * (2.0 * x + t).sin()),
        u_t: Some(Arc::new(|x, t| (2.0 * x + t).cos())),
    };
    let mut pb = ProblemSpec::from_exact(
        0.0,
        std::f64::consts::PI,
        FluxSpec::new(3.0, 2),
        Arc::new(nonlinear_trig_source),
        exact,
    );
    pb.initial_dxxx = Some(Arc::new(|x: f64| -8.0 * (2.0 * x).cos()));
    pb
}

/// `2 sech^2(x - 4t + 4)` as a jet in `x`.
pub fn soliton_jet(x: f64, t: f64) -> Jet {
    let s = (Jet::variable(x) + (4.0 - 4.0 * t)).sech();
    s * s * 2.0
}

/// Two-soliton solution of `u_t + u_xxx + 6 u u_x = 0` as a jet in `x`, written as
/// `5 (4.5 + 2 sinh^2(xi) sech^2(eta)) / (3 cosh(xi) - 2 tanh(eta) sinh(xi))^2`
/// with `xi = 1.5 (x - 9t + 14.5)` and `eta = x - 4t + 12`, which has no removable
/// singularity at `xi = 0`.
pub fn two_soliton_jet(x: f64, t: f64) -> Jet {
    let xv = Jet::variable(x);
    let xi = (xv + (14.5 - 9.0 * t)) * 1.5;
    let eta = xv + (12.0 - 4.0 * t);
    let (sh, ch) = (xi.sinh(), xi.cosh());
    let se = eta.sech();
    let num = Jet::constant(4.5) + sh * sh * se * se * 2.0;
    let den = ch * 3.0 - eta.tanh() * sh * 2.0;
    num / (den * den) * 5.0
}

/// KdV problem `u_t + u_xxx + (3u^2)_x = 0` with data from a closed form jet in `x`.
pub fn kdv_problem(a: f64, b: f64, jet: fn(f64, f64) -> Jet) -> ProblemSpec {
    let exact = ExactFields {
        u: Arc::new(move |x, t| jet(x, t).value()),
        q: Arc::new(move |x, t| jet(x, t).derivative(1)),
        p: Arc::new(move |x, t| jet(x, t).derivative(2)),
        // u_t = -u_xxx - 6 u u_x for an exact solution
        u_t: Some(Arc::new(move |x, t| {
            let j = jet(x, t);
            -j.derivative(3) - 6.0 * j.value() * j.derivative(1)
        })),
    };
    let mut pb = ProblemSpec::from_exact(a, b, FluxSpec::new(3.0, 2), Arc::new(|_, _| 0.0), exact);
    pb.initial_dx = Some(Arc::new(move |x| jet(x, 0.0).derivative(1)));
    pb.initial_dxxx = Some(Arc::new(move |x| jet(x, 0.0).derivative(3)));
    pb
}

pub fn soliton_problem() -> ProblemSpec {
    kdv_problem(-10.0, 0.0, soliton_jet)
}

pub fn two_soliton_problem() -> ProblemSpec {
    kdv_problem(-20.0, 0.0, two_soliton_jet)
}

/// `u = A sin(w x + c t)` with `F(u) = beta u^m`; the source is manufactured from the
/// closed form. Used by custom runs.
pub fn manufactured_trig_problem(a: f64, b: f64, amp: f64, wave: f64, speed: f64, flux: FluxSpec) -> ProblemSpec {
    let exact = ExactFields {
        u: Arc::new(move |x, t| amp * (wave * x + speed * t).sin()),
        q: Arc::new(move |x, t| amp * wave * (wave * x + speed * t).cos()),
        p: Arc::new(move |x, t| -amp * wave * wave * (wave * x + speed * t).sin()),
        u_t: Some(Arc::new(move |x, t| amp * speed * (wave * x + speed * t).cos())),
    };
    let source = Arc::new(move |x: f64, t: f64| {
        let s = wave * x + speed * t;
        let u = amp * s.sin();
        let ux = amp * wave * s.cos();
        amp * speed * s.cos() - amp * wave.powi(3) * s.cos() + flux.derivative(u) * ux
    });
    let mut pb = ProblemSpec::from_exact(a, b, flux, source, exact);
    pb.initial_dxxx = Some(Arc::new(move |x: f64| -amp * wave.powi(3) * (wave * x).cos()));
    pb
}

/// The zero solution of `u_t + u_xxx + F(u)_x = 0`.
pub fn zero_problem(a: f64, b: f64, flux: FluxSpec) -> ProblemSpec {
    let exact = ExactFields {
        u: Arc::new(|_, _| 0.0),
        q: Arc::new(|_, _| 0.0),
        p: Arc::new(|_, _| 0.0),
        u_t: Some(Arc::new(|_, _| 0.0)),
    };
    let mut pb = ProblemSpec::from_exact(a, b, flux, Arc::new(|_, _| 0.0), exact);
    pb.initial_dxxx = Some(Arc::new(|_| 0.0));
    pb
}
