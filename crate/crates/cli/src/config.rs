//! Run configuration files.
//!
//! A config is a TOML document with the sections `problem`, `discretization`, `time`,
//! `tau` and `output`:
//!
//! ```toml
//! [problem]
//! name = "manufactured_trig"   # linear_trig | nonlinear_trig | soliton | two_soliton | zero | manufactured_trig
//! a = 0.0
//! b = 1.0
//! beta = 3.0
//! m = 2
//! amplitude = 1.0
//! wave = 2.0
//! speed = 1.0
//!
//! [discretization]
//! k = 2
//! levels = [2, 3, 4]           # convergence study with 2^n elements, or
//! # num_elements = 64          # a single time-series run
//!
//! [time]
//! scheme = "midpoint"          # midpoint | backward_euler
//! final_time = 0.1
//! dt = "preset"                # a number, "preset", "c*h^2" or "c*h^3"
//! init = "stage"               # stationary | stage | l2
//!
//! [tau]
//! values = [0.0, -1.0, 1.0, 1.0]
//! tau_f = "constant"           # zero | constant | derivative_squared_plus_quarter
//! tau_f_value = 3.0
//!
//! [output]
//! dir = "out"
//! snapshot_stride = 10
//! ```

use std::path::{Path, PathBuf};

use hdg_kdv::experiments::DtRule;
use hdg_kdv::problems;
use hdg_kdv::stepper::{InitMode, NewtonSettings, ProblemSpec, TimeScheme};
use hdg_kdv::{FluxSpec, StabilizationParams, TauFRule};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub discretization: DiscretizationSection,
    pub time: TimeSection,
    #[serde(default)]
    pub tau: TauSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub wave: f64,
    #[serde(default = "one")]
    pub speed: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub k: usize,
    pub levels: Option<Vec<u32>>,
    pub num_elements: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub final_time: f64,
    pub dt: DtValue,
    #[serde(default = "default_init")]
    pub init: String,
    pub newton_max_iters: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum DtValue {
    Fixed(f64),
    Rule(String),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TauSection {
    #[serde(default = "reference_tau")]
    pub values: [f64; 4],
    #[serde(default = "default_tau_f")]
    pub tau_f: String,
    pub tau_f_value: Option<f64>,
}

impl Default for TauSection {
    fn default() -> Self {
        Self { values: reference_tau(), tau_f: default_tau_f(), tau_f_value: None }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_m() -> u32 {
    2
}
fn one() -> f64 {
    1.0
}
fn default_scheme() -> String {
    "midpoint".into()
}
fn default_init() -> String {
    "stationary".into()
}
fn reference_tau() -> [f64; 4] {
    [0.0, -1.0, 1.0, 1.0]
}
fn default_tau_f() -> String {
    "zero".into()
}
fn default_stride() -> usize {
    10
}

/// What a validated config asks for.
#[derive(Debug, Clone, PartialEq)]
pub enum RunKind {
    Convergence(Vec<u32>),
    TimeSeries(usize),
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates; errors name the offending key.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: &str| Err(CliError::Config(format!("`{key}`: {msg}")));
        if !(self.time.final_time > 0.0 && self.time.final_time.is_finite()) {
            return bad("time.final_time", "must be positive");
        }
        if self.output.snapshot_stride == 0 {
            return bad("output.snapshot_stride", "must be positive");
        }
        match (&self.discretization.levels, self.discretization.num_elements) {
            (Some(_), Some(_)) => return bad("discretization.levels", "give either `levels` or `num_elements`, not both"),
            (None, None) => return bad("discretization.num_elements", "missing (or give `levels`)"),
            (Some(l), None) if l.is_empty() => return bad("discretization.levels", "must not be empty"),
            (None, Some(0)) => return bad("discretization.num_elements", "must be positive"),
            _ => {}
        }
        if self.tau.tau_f == "constant" && self.tau.tau_f_value.is_none() {
            return bad("tau.tau_f_value", "required when `tau_f = \"constant\"`");
        }
        self.scheme()?;
        self.init_mode()?;
        self.dt_rule()?;
        self.params()?;
        self.problem_spec()?;
        Ok(())
    }

    pub fn kind(&self) -> RunKind {
        match (&self.discretization.levels, self.discretization.num_elements) {
            (Some(l), _) => RunKind::Convergence(l.clone()),
            (None, n) => RunKind::TimeSeries(n.unwrap_or(1)),
        }
    }

    pub fn scheme(&self) -> Result<TimeScheme, CliError> {
        parse_scheme(&self.time.scheme).map_err(|m| CliError::Config(format!("`time.scheme`: {m}")))
    }

    pub fn init_mode(&self) -> Result<InitMode, CliError> {
        match self.time.init.as_str() {
            "stationary" => Ok(InitMode::Stationary),
            "stage" => Ok(InitMode::StageStationary),
            "l2" => Ok(InitMode::L2Fallback),
            other => Err(CliError::Config(format!("`time.init`: unknown mode {other:?}"))),
        }
    }

    pub fn dt_rule(&self) -> Result<DtRule, CliError> {
        let rule = match &self.time.dt {
            DtValue::Fixed(v) => DtRule::Fixed(*v),
            DtValue::Rule(s) => parse_dt_rule(s).map_err(|m| CliError::Config(format!("`time.dt`: {m}")))?,
        };
        let positive = match rule {
            DtRule::Fixed(c) | DtRule::H2(c) | DtRule::H3(c) => c > 0.0 && c.is_finite(),
            DtRule::Preset => true,
        };
        if !positive {
            return Err(CliError::Config("`time.dt`: must be positive".into()));
        }
        Ok(rule)
    }

    pub fn params(&self) -> Result<StabilizationParams, CliError> {
        let [a, b, c, d] = self.tau.values;
        let rule = match self.tau.tau_f.as_str() {
            "zero" => TauFRule::Zero,
            "constant" => TauFRule::Constant(self.tau.tau_f_value.unwrap_or(0.0)),
            "derivative_squared_plus_quarter" => TauFRule::DerivativeSquaredPlusQuarter,
            other => return Err(CliError::Config(format!("`tau.tau_f`: unknown rule {other:?}"))),
        };
        Ok(StabilizationParams::new(a, b, c, d).with_tau_f(rule))
    }

    pub fn newton(&self) -> NewtonSettings {
        let mut s = NewtonSettings::default();
        if let Some(n) = self.time.newton_max_iters {
            s.max_iters = n;
        }
        s
    }

    /// The named problem. Named closed forms use their own interval and flux.
    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let p = &self.problem;
        let interval = || match (p.a, p.b) {
            (Some(a), Some(b)) if a < b => Ok((a, b)),
            (Some(_), Some(_)) => Err(CliError::Config("`problem.a`: must be smaller than `problem.b`".into())),
            (None, _) => Err(CliError::Config("`problem.a`: missing".into())),
            (_, None) => Err(CliError::Config("`problem.b`: missing".into())),
        };
        let flux = FluxSpec::new(p.beta, p.m);
        Ok(match p.name.as_str() {
            "linear_trig" => problems::linear_trig_problem(),
            "nonlinear_trig" => problems::nonlinear_trig_problem(),
            "soliton" => problems::soliton_problem(),
            "two_soliton" => problems::two_soliton_problem(),
            "zero" => {
                let (a, b) = interval()?;
                problems::zero_problem(a, b, flux)
            }
            "manufactured_trig" => {
                let (a, b) = interval()?;
                problems::manufactured_trig_problem(a, b, p.amplitude, p.wave, p.speed, flux)
            }
            other => return Err(CliError::Config(format!("`problem.name`: unknown problem {other:?}"))),
        })
    }
}

pub fn parse_scheme(s: &str) -> Result<TimeScheme, String> {
    match s {
        "midpoint" => Ok(TimeScheme::Midpoint),
        "be" | "backward_euler" => Ok(TimeScheme::BackwardEuler),
        other => Err(format!("unknown scheme {other:?} (midpoint | backward_euler)")),
    }
}

/// `"preset"`, `"c*h^2"` or `"c*h^3"`.
pub fn parse_dt_rule(s: &str) -> Result<DtRule, String> {
    let s = s.trim();
    if s == "preset" {
        return Ok(DtRule::Preset);
    }
    if let Ok(v) = s.parse::<f64>() {
        return Ok(DtRule::Fixed(v));
    }
    let (coef, pow) = s.split_once("*h^").ok_or_else(|| format!("cannot read {s:?} as a step rule"))?;
    let c: f64 = coef.trim().parse().map_err(|_| format!("bad coefficient in {s:?}"))?;
    match pow.trim() {
        "2" => Ok(DtRule::H2(c)),
        "3" => Ok(DtRule::H3(c)),
        _ => Err(format!("only h^2 and h^3 rules are supported, got {s:?}")),
    }
}

/// `"n0..n1"` (inclusive).
pub fn parse_levels(s: &str) -> Result<Vec<u32>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected n0..n1, got {s:?}"))?;
    let a: u32 = a.trim().parse().map_err(|_| format!("bad level {a:?}"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad level {b:?}"))?;
    if a > b || b > 20 {
        return Err(format!("empty or too fine level range {s:?}"));
    }
    Ok((a..=b).collect())
}
