//! Two-patch growth model with periodic environments and migration, reduced
//! to the slow-fast system with `f = r₁ − r₂` and `m = 2μ`.
//!
//! The growth rate of `x₁x₂` is
//! `Δ = (1/2π) ∫ r₁ + r₂ + (√(m² + y_m²) − m)` over one period, where `y_m`
//! is the attracting periodic solution of the reduced system.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::constrained::{exit_point, ConstrainedError};
use crate::dynamics::{magnify, simulate, DynamicsError, Scenario, Trajectory};
use crate::fnspec::{Expr, FnSpecError, PiecewiseFn, Side};
use crate::numeric::quad::integrate_smooth;
use crate::numeric::roots::bisect;

const FIXED_POINT_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 10_000;
/// Threshold bisection stops once `|Δ|` is below this.
pub const DELTA_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KatrielError {
    #[error("model hypothesis fails: {0}")]
    Model(String),
    #[error("mu must be non-negative, got {0}")]
    NegativeMu(f64),
    #[error("period map did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("rho = {rho} is below the admissible bound {rho_star}")]
    RhoTooNegative { rho: f64, rho_star: f64 },
    #[error("growth rate keeps one sign on the scanned range")]
    NoBracket,
    #[error(transparent)]
    Fn(#[from] FnSpecError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Constrained(#[from] ConstrainedError),
}

#[derive(Debug, Clone)]
pub struct KatrielModel {
    pub r1: PiecewiseFn,
    pub r2: PiecewiseFn,
    /// Frequency of the environment, identified with the slow-fast `ε`.
    pub epsilon: f64,
    /// `f = r₁ − r₂`.
    pub f: PiecewiseFn,
    pub mean_r1: f64,
    pub mean_r2: f64,
    pub chi: f64,
}

impl KatrielModel {
    pub fn new(r1: PiecewiseFn, r2: PiecewiseFn, epsilon: f64) -> Result<KatrielModel, KatrielError> {
        for r in [&r1, &r2] {
            if r.period().map_or(true, |p| (p - 2.0 * PI).abs() > 1e-12) {
                return Err(KatrielError::Model("r1 and r2 must be periodic with period 2*pi".into()));
            }
        }
        if !(epsilon > 0.0) {
            return Err(KatrielError::Model(format!("epsilon must be positive, got {epsilon}")));
        }
        let f = r1.combine(&r2, Expr::Sub)?;
        if let Some(w) = f.validate_hypotheses().warnings.first() {
            return Err(FnSpecError::HypothesisViolation {
                x: w.x,
                detail: w.detail.clone(),
            }
            .into());
        }
        let (mean_r1, mean_r2) = (r1.mean(), r2.mean());
        if !(mean_r1 < 0.0 && mean_r2 < 0.0) {
            return Err(KatrielError::Model(format!(
                "patch means must be negative, got {mean_r1} and {mean_r2}"
            )));
        }
        let chi = chi_by_max(&r1, &r2, &f)?;
        if !(chi > 0.0) {
            return Err(KatrielError::Model(format!("chi must be positive, got {chi}")));
        }
        Ok(KatrielModel {
            r1,
            r2,
            epsilon,
            f,
            mean_r1,
            mean_r2,
            chi,
        })
    }

    /// `(1/2π) ∫ |r₁ − r₂|`.
    pub fn mean_abs_f(&self) -> Result<f64, KatrielError> {
        Ok(abs_mass(&self.f)? / (2.0 * PI))
    }
}

/// Sign-change abscissae inside one period `[start, start + 2π)`, with the
/// period ends added.
fn period_cuts(f: &PiecewiseFn) -> Vec<f64> {
    let a = f.start();
    let mut cuts = vec![a];
    cuts.extend(f.sign_changes_unchecked().iter().map(|c| c.theta).filter(|&t| t > a && t < a + 2.0 * PI));
    cuts.push(a + 2.0 * PI);
    cuts
}

/// `∫ |f|` over one period.
fn abs_mass(f: &PiecewiseFn) -> Result<f64, FnSpecError> {
    let cuts = period_cuts(f);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += f.integrate(w[0], w[1])?.abs();
    }
    Ok(total)
}

/// `χ = (1/2π) ∫ max(r₁, r₂)`, integrating whichever patch is larger
/// between consecutive sign changes of `r₁ − r₂`.
fn chi_by_max(r1: &PiecewiseFn, r2: &PiecewiseFn, f: &PiecewiseFn) -> Result<f64, FnSpecError> {
    let cuts = period_cuts(f);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let top = if f.eval(mid, Side::Right)? > 0.0 { r1 } else { r2 };
        total += top.integrate(w[0], w[1])?;
    }
    Ok(total / (2.0 * PI))
}

/// Reduced system with `m = 2μ`, started at `(0, f(0⁺))` over one period.
pub fn reduce(model: &KatrielModel, mu: f64) -> Result<Scenario, KatrielError> {
    if !(mu > 0.0) {
        return Err(KatrielError::NegativeMu(mu));
    }
    let x0 = model.f.start();
    let y0 = model.f.eval(x0, Side::Right)?;
    Ok(Scenario::with_m(model.f.clone(), model.epsilon, 2.0 * mu, (x0, y0), 2.0 * PI)?)
}

/// Reduced system with `m = e^{ρ/ε}` given through `ρ`, which keeps full
/// precision when `m` is exponentially small.
pub fn reduce_rho(model: &KatrielModel, rho: f64) -> Result<Scenario, KatrielError> {
    let x0 = model.f.start();
    let y0 = model.f.eval(x0, Side::Right)?;
    Ok(Scenario::with_rho(model.f.clone(), model.epsilon, rho, (x0, y0), 2.0 * PI)?)
}

#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    /// Fixed point of the period map.
    pub y0: f64,
    /// One period of `y_m` started at the fixed point.
    pub period: Trajectory,
    pub iterations: usize,
    /// `ln P′(y₀)` from the variational equation; the contraction factor
    /// is its exponential and may underflow.
    pub log_contraction: f64,
}

impl PeriodicSolution {
    pub fn contraction(&self) -> f64 {
        self.log_contraction.exp()
    }
}

/// Iterates the period map `y₀ ↦ y(2π; y₀)` from `f(0⁺)` until successive
/// values agree to `1e−10` both in `y` and in the magnified chart.
pub fn periodic_solution(scn: &Scenario) -> Result<PeriodicSolution, KatrielError> {
    let period = scn
        .f
        .period()
        .ok_or_else(|| KatrielError::Model("periodic solution needs a periodic f".into()))?;
    if !(scn.m() > 0.0) {
        return Err(KatrielError::Model("m must be positive".into()));
    }
    let eps = scn.epsilon;
    let x0 = scn.origin.0;
    let base = scn.clone().with_t_max(period);
    let mut y0 = scn.origin.1;
    for it in 1..=MAX_ITERATIONS {
        let tr = simulate(&base.clone().with_origin((x0, y0)))?;
        let y1 = tr.last().y;
        let close = (y1 - y0).abs() < FIXED_POINT_TOL
            && (magnify(y1, eps) - magnify(y0, eps)).abs() < FIXED_POINT_TOL;
        if close {
            return Ok(PeriodicSolution {
                y0,
                log_contraction: tr.log_sensitivity,
                period: tr,
                iterations: it,
            });
        }
        y0 = y1;
    }
    Err(KatrielError::NoConvergence(MAX_ITERATIONS))
}

/// Growth rate `Δ(ε, μ)`; at `μ = 0` the patches decouple.
pub fn delta(model: &KatrielModel, mu: f64) -> Result<f64, KatrielError> {
    if mu < 0.0 || mu.is_nan() {
        return Err(KatrielError::NegativeMu(mu));
    }
    if mu == 0.0 {
        return Ok(model.mean_r1 + model.mean_r2);
    }
    delta_from(model, &reduce(model, mu)?)
}

/// `Δ` at `m = e^{ρ/ε}`.
pub fn delta_rho(model: &KatrielModel, rho: f64) -> Result<f64, KatrielError> {
    delta_from(model, &reduce_rho(model, rho)?)
}

fn delta_from(model: &KatrielModel, scn: &Scenario) -> Result<f64, KatrielError> {
    let sol = periodic_solution(scn)?;
    Ok(model.mean_r1 + model.mean_r2 + sol.period.mixing_integral / (2.0 * PI))
}

/// Whether every horizontal segment started at a sign change ends before
/// the next sign change.
fn segments_fit(f: &PiecewiseFn, rho: f64) -> Result<bool, KatrielError> {
    for c in f.sign_changes()? {
        let next = match f.next_sign_change(c.theta) {
            Some(n) => n.theta,
            None => continue,
        };
        if exit_point(f, rho, c.theta)?.x_star >= next {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Most negative `ρ` for which horizontal segments stay between
/// consecutive sign changes.
pub fn rho_star(f: &PiecewiseFn) -> Result<f64, KatrielError> {
    let mut lo = -0.5;
    while segments_fit(f, lo)? {
        lo *= 2.0;
        if lo < -1e3 {
            return Ok(f64::NEG_INFINITY);
        }
    }
    let mut hi = lo / 2.0;
    while !segments_fit(f, hi)? {
        hi /= 2.0;
        if hi > -1e-12 {
            return Ok(0.0);
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if segments_fit(f, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Growth rate predicted by the periodic C-trajectory: `y_m ≈ f` on slow
/// segments and `y_m ≈ 0` on horizontal ones, so each horizontal segment
/// removes its `|f|`-mass from `∫ |f|`.
pub fn predict_delta(model: &KatrielModel, rho: f64) -> Result<f64, KatrielError> {
    let f = &model.f;
    if !segments_fit(f, rho)? {
        return Err(KatrielError::RhoTooNegative {
            rho,
            rho_star: rho_star(f)?,
        });
    }
    let mut loss = 0.0;
    for c in f.sign_changes()? {
        let s = exit_point(f, rho, c.theta)?;
        loss += f.integrate(c.theta, s.x_star)?.abs();
    }
    let mass = abs_mass(f)?;
    Ok(model.mean_r1 + model.mean_r2 + (mass - loss) / (2.0 * PI))
}

/// Root of [`predict_delta`] in `[ρ*, 0)`.
pub fn predicted_threshold(model: &KatrielModel) -> Result<f64, KatrielError> {
    let lo = rho_star(&model.f)?.max(-50.0);
    let hi = -1e-9;
    let g = |r: f64| predict_delta(model, r).unwrap_or(f64::NAN);
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo <= 0.0 && ghi > 0.0) {
        return Err(KatrielError::NoBracket);
    }
    Ok(bisect(g, lo, hi, 1e-10))
}

#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub mu_star: f64,
    pub rho_star: f64,
    /// Scanned `(ρ, Δ)` pairs followed by the bisection iterates, sorted by `ρ`.
    pub delta_curve: Vec<(f64, f64)>,
}

impl ThresholdResult {
    /// Rows `rho,mu,delta` and a trailing summary comment.
    pub fn to_csv(&self, epsilon: f64) -> String {
        let mut out = String::from("rho,mu,delta\n");
        for &(r, d) in &self.delta_curve {
            let _ = writeln!(out, "{r},{},{d}", 0.5 * (r / epsilon).exp());
        }
        let _ = writeln!(out, "# rho_star={} mu_star={:e}", self.rho_star, self.mu_star);
        out
    }
}

/// Scan grid in `ρ`: `−3, −2.95, …, −0.05, −0.01`.
pub fn scan_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..60).map(|k| -3.0 + 0.05 * k as f64).collect();
    g.push(-0.01);
    g
}

/// Smallest migration rate with positive growth, found in `ρ = ε ln 2μ`:
/// scan upward from `ρ = −3` for the first sign change of `Δ` from negative
/// to positive, then bisect to `|Δ| < 1e−4`.
pub fn inflation_threshold(model: &KatrielModel) -> Result<ThresholdResult, KatrielError> {
    let mut curve = Vec::new();
    let mut bracket = None;
    for rho in scan_grid() {
        let d = delta_rho(model, rho)?;
        if let Some(&(r0, d0)) = curve.last() {
            if bracket.is_none() && d0 < 0.0 && d >= 0.0 {
                bracket = Some(((r0, d0), (rho, d)));
            }
        }
        curve.push((rho, d));
    }
    let ((mut lo, _), (mut hi, dhi)) = bracket.ok_or(KatrielError::NoBracket)?;
    let mut root = (hi, dhi);
    while root.1.abs() >= DELTA_TOL && hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let d = delta_rho(model, mid)?;
        curve.push((mid, d));
        root = (mid, d);
        if d < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rho_star = root.0;
    Ok(ThresholdResult {
        mu_star: 0.5 * (rho_star / model.epsilon).exp(),
        rho_star,
        delta_curve: curve,
    })
}

/// `dV̄/dt` of the log-ratio equation, `(1/ε)(f − 2μ sinh V̄)`.
pub fn log_ratio_rhs(fx: f64, mu: f64, epsilon: f64, v: f64) -> f64 {
    (fx - 2.0 * mu * v.sinh()) / epsilon
}

/// `dW/dt = (1/ε)√(4μ² + W²)(f − W)` for `W = 2μ sinh V̄`.
pub fn reduced_rhs(fx: f64, mu: f64, epsilon: f64, w: f64) -> f64 {
    (2.0 * mu).hypot(w) * (fx - w) / epsilon
}

/// Same right-hand side written as `(1/ε)(f − W)` weighed by
/// `2μ cosh V̄`, the chain rule applied to `W = 2μ sinh V̄`.
pub fn chain_rule_rhs(fx: f64, mu: f64, epsilon: f64, v: f64) -> f64 {
    2.0 * mu * v.cosh() * log_ratio_rhs(fx, mu, epsilon, v)
}

/// Integral of `f` over one period by plain quadrature of each piece; used
/// only as a cross-check.
pub fn period_integral(f: &PiecewiseFn, g: impl Fn(f64) -> f64) -> Result<f64, FnSpecError> {
    let a = f.start();
    let mut cuts = period_cuts(f);
    cuts.extend(f.breakpoints_between(a, a + 2.0 * PI)?);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    Ok(cuts.windows(2).map(|w| integrate_smooth(&g, w[0], w[1], 1e-13)).sum())
}
