//! Numerical integration of the slow-fast system in the original chart
//! `(x, y)` and in the exponentially magnified chart `(x, z)`,
//! `z = sgn(y)|y|^ε`.

mod dp45;
mod simulate;

use std::fmt::Write as _;

use thiserror::Error;

use crate::fnspec::{Expr, FnSpecError, PiecewiseFn, Side};

pub use simulate::{simulate, simulate_zchart};

/// Exponent arguments are clamped to this magnitude before `exp`.
const EXP_CLAMP: f64 = 700.0;
/// Beyond `exp(ASYMPTOTIC)` the `√(1 + e^{2a})` factor is replaced by `e^a`.
const ASYMPTOTIC: f64 = 80.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("step size {h:e} fell below the minimum at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Fn(#[from] FnSpecError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rel: f64,
    pub abs_y: f64,
    pub abs_z: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel: 1e-8,
            abs_y: 1e-24,
            abs_z: 1e-10,
            h_min: 1e-12,
            h_max: 1e-2,
        }
    }
}

/// One run of the system: the function, the small parameters, the initial
/// point and the horizon.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub f: PiecewiseFn,
    pub epsilon: f64,
    /// `ln m`; `−∞` encodes `m = 0`. Kept in log form so that `ρ/ε` far
    /// below the double range still has a usable `ρ`.
    log_m: f64,
    pub origin: (f64, f64),
    pub t_max: f64,
    pub solver: SolverOptions,
    /// Extra additive term `g(x)` in `dy/dt`; used for perturbation studies.
    pub perturbation: Option<Expr>,
}

impl Scenario {
    /// Scenario with `m = e^{ρ/ε}`.
    pub fn with_rho(
        f: PiecewiseFn,
        epsilon: f64,
        rho: f64,
        origin: (f64, f64),
        t_max: f64,
    ) -> Result<Scenario, DynamicsError> {
        if !(rho < 0.0) {
            return Err(DynamicsError::InvalidScenario(format!("rho must be negative, got {rho}")));
        }
        Scenario::build(f, epsilon, rho / epsilon, origin, t_max)
    }

    /// Scenario with `m` given directly; `m = 0` is admitted.
    pub fn with_m(
        f: PiecewiseFn,
        epsilon: f64,
        m: f64,
        origin: (f64, f64),
        t_max: f64,
    ) -> Result<Scenario, DynamicsError> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(DynamicsError::InvalidScenario(format!("m must be finite and non-negative, got {m}")));
        }
        Scenario::build(f, epsilon, m.ln(), origin, t_max)
    }

    fn build(
        f: PiecewiseFn,
        epsilon: f64,
        log_m: f64,
        origin: (f64, f64),
        t_max: f64,
    ) -> Result<Scenario, DynamicsError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(DynamicsError::InvalidScenario(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(t_max > 0.0) {
            return Err(DynamicsError::InvalidScenario(format!("t_max must be positive, got {t_max}")));
        }
        if !origin.1.is_finite() || !f.contains(origin.0) {
            return Err(DynamicsError::InvalidScenario(format!(
                "origin ({}, {}) is not a finite point of the domain",
                origin.0, origin.1
            )));
        }
        Ok(Scenario {
            f,
            epsilon,
            log_m,
            origin,
            t_max,
            solver: SolverOptions::default(),
            perturbation: None,
        })
    }

    pub fn m(&self) -> f64 {
        self.log_m.exp()
    }

    pub fn log_m(&self) -> f64 {
        self.log_m
    }

    /// `ρ = ε ln m` (`−∞` when `m = 0`).
    pub fn rho(&self) -> f64 {
        self.epsilon * self.log_m
    }

    pub fn with_origin(mut self, origin: (f64, f64)) -> Scenario {
        self.origin = origin;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Scenario {
        self.t_max = t_max;
        self
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Scenario {
        self.solver = solver;
        self
    }

    /// `dy/dt` given the value `fx` of `f` at the current abscissa.
    pub(crate) fn rhs_y(&self, x: f64, fx: f64, y: f64) -> f64 {
        let mut v = self.m().hypot(y) * (fx - y) / self.epsilon;
        if let Some(g) = &self.perturbation {
            v += g.eval(x);
        }
        v
    }

    /// `dz/dt` given the value `fx` of `f` at the current abscissa.
    pub(crate) fn rhs_z(&self, x: f64, fx: f64, z: f64) -> f64 {
        if z == 0.0 {
            // the continuous extension is unbounded at z = 0; saturate
            return if fx == 0.0 { 0.0 } else { fx.signum() * EXP_CLAMP.exp() };
        }
        let lz = z.abs().ln();
        let a = (self.rho() - lz) / self.epsilon;
        let log_factor = if 2.0 * a > ASYMPTOTIC {
            a.min(EXP_CLAMP)
        } else {
            0.5 * (2.0 * a).exp().ln_1p()
        };
        let y = unmagnify(z, self.epsilon);
        let mut v = (lz + log_factor).min(EXP_CLAMP).exp() * (fx - y);
        if let Some(g) = &self.perturbation {
            if y != 0.0 {
                v += self.epsilon * (z / y).abs() * g.eval(x);
            }
        }
        v
    }
}

/// `z = sgn(y)|y|^ε`.
pub fn magnify(y: f64, epsilon: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    y.signum() * y.abs().powf(epsilon)
}

/// `y = [z]^{1/ε} = sgn(z)|z|^{1/ε}`, inverse of [`magnify`].
pub fn unmagnify(z: f64, epsilon: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    z.signum() * z.abs().powf(1.0 / epsilon)
}

/// `dy/dt` at `(x, y)`, right limit of `f` at breakpoints.
pub fn field_xy(scn: &Scenario, x: f64, y: f64) -> Result<f64, DynamicsError> {
    let fx = scn.f.eval(x, Side::Right)?;
    Ok(scn.rhs_y(x, fx, y))
}

/// `dz/dt` at `(x, z)` in the magnified chart.
pub fn field_xz(scn: &Scenario, x: f64, z: f64) -> Result<f64, DynamicsError> {
    let fx = scn.f.eval(x, Side::Right)?;
    Ok(scn.rhs_z(x, fx, z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    Xy,
    Xz,
}

impl Chart {
    pub fn label(self) -> &'static str {
        match self {
            Chart::Xy => "xy",
            Chart::Xz => "xz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub chart: Chart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartSwitch {
    pub t: f64,
    pub from: Chart,
    pub to: Chart,
    /// `y` before the switch and `unmagnify(z)` after it.
    pub y_before: f64,
    pub y_after: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub coordinate_log: Vec<ChartSwitch>,
    pub epsilon: f64,
    /// `∫ (√(m² + y²) − m) dt` over the run.
    pub mixing_integral: f64,
    /// `ln |∂y(T)/∂y₀|` from the variational equation.
    pub log_sensitivity: f64,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a trajectory has at least its initial sample")
    }

    /// Samples as CSV with columns `t,x,y,z,chart`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,z,chart\n");
        for s in &self.samples {
            let y = if s.chart == Chart::Xz && s.y == 0.0 && s.z != 0.0 {
                if s.z > 0.0 { "+0e0".to_string() } else { "-0e0".to_string() }
            } else {
                s.y.to_string()
            };
            let _ = writeln!(out, "{},{},{},{},{}", s.t, s.x, y, s.z, s.chart.label());
        }
        out
    }
}
