//! Adaptive integration with breakpoint landing and chart switching.
//!
//! Chart policy. The `(x, y)` chart is used on the slow curve and far from
//! the axis. Below `Y_LO` (and above `e²·m`) the state moves to the `(x, z)`
//! chart. It moves back once `|y| > Y_HI`. Below `|y| = m` the magnified
//! field becomes singular, so the crossing of the inner band `|y| ≲ m` is
//! done in the `(x, y)` chart with an absolute tolerance scaled to `m`. The
//! state returns to `(x, z)` once `|y| > e²·m`.

use super::dp45::{self, State};
use super::{magnify, unmagnify, Chart, ChartSwitch, DynamicsError, Sample, Scenario, Trajectory};

const Y_HI: f64 = 0.367_879_441_171_442_33; // e^{-1}
const Y_LO: f64 = 0.135_335_283_236_612_7; // e^{-2}
const E2: f64 = 7.389_056_098_930_65;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Policy {
    Auto,
    /// Stay in the magnified chart except for the inner band.
    Magnified,
}

/// Integrates the scenario from its origin over `[0, t_max]` (clipped to
/// the domain end), switching charts as described in the module docs.
pub fn simulate(scn: &Scenario) -> Result<Trajectory, DynamicsError> {
    run(scn, Policy::Auto)
}

/// Integration in the magnified chart, for initial conditions inside the
/// halo of the axis. The inner band `|y| < m` is still crossed in `(x, y)`.
pub fn simulate_zchart(scn: &Scenario) -> Result<Trajectory, DynamicsError> {
    let z0 = magnify(scn.origin.1, scn.epsilon);
    if z0.abs() > 1.5 {
        return Err(DynamicsError::InvalidScenario(format!(
            "magnified initial value {z0} exceeds 1.5"
        )));
    }
    run(scn, Policy::Magnified)
}

fn run(scn: &Scenario, policy: Policy) -> Result<Trajectory, DynamicsError> {
    let f = &scn.f;
    let eps = scn.epsilon;
    let m = scn.m();
    let opts = scn.solver;
    let (x0, y0) = scn.origin;
    let x_end = (x0 + scn.t_max).min(f.end());
    let spans = f.spans(x0, x_end)?;

    let use_z = policy == Policy::Magnified || m < (-6.0f64).exp();
    let core = E2 * m;
    let abs_y = if m > 0.0 {
        opts.abs_y.min(1e-6 * m)
    } else {
        f64::MIN_POSITIVE
    };

    let mut chart = match policy {
        Policy::Auto if use_z && y0.abs() > core && y0.abs() < Y_LO => Chart::Xz,
        Policy::Auto => Chart::Xy,
        Policy::Magnified if y0.abs() > core => Chart::Xz,
        Policy::Magnified => Chart::Xy,
    };
    let mut u: State = [
        match chart {
            Chart::Xy => y0,
            Chart::Xz => magnify(y0, eps),
        },
        0.0,
        0.0,
    ];
    let mut t = 0.0;
    let mut h = opts.h_max.min(1e-3);
    let mut samples = vec![sample(t, x0, u[0], chart, eps)];
    let mut log = Vec::new();

    for span in &spans {
        let expr = &f.pieces()[span.piece].expr;
        let shift = span.shift;
        let t_end = span.to - x0;
        while t < t_end {
            let remaining = t_end - t;
            let landing = remaining <= h * (1.0 + 1e-9);
            let hs = if landing { remaining } else { h };
            let current = chart;
            let mut rhs = |tt: f64, st: &State| -> State {
                let x = x0 + tt;
                let fx = expr.eval(x - shift);
                let (du, y) = match current {
                    Chart::Xy => (scn.rhs_y(x, fx, st[0]), st[0]),
                    Chart::Xz => (scn.rhs_z(x, fx, st[0]), unmagnify(st[0], eps)),
                };
                let r = m.hypot(y);
                let excess = if r == 0.0 { 0.0 } else { y * y / (r + m) };
                let variation = if r == 0.0 {
                    0.0
                } else {
                    (y * (fx - y) / r - r) / eps
                };
                [du, excess, variation]
            };
            let (next, err) = dp45::step(&mut rhs, t, &u, hs);
            let scale = match chart {
                Chart::Xy => opts.rel * u[0].abs().max(next[0].abs()) + abs_y,
                Chart::Xz => opts.rel * u[0].abs().max(next[0].abs()) + opts.abs_z,
            };
            let norm = (err[0] / scale).abs();
            if !next.iter().all(|v| v.is_finite()) || !norm.is_finite() {
                h = 0.2 * hs;
                if h < opts.h_min {
                    return Err(DynamicsError::NonFinite { t });
                }
                continue;
            }
            if norm > 1.0 {
                h = dp45::next_h(hs, norm);
                if h < opts.h_min {
                    return Err(DynamicsError::StepUnderflow { t, h });
                }
                continue;
            }
            t = if landing { t_end } else { t + hs };
            u = next;
            let proposed = dp45::next_h(hs, norm);
            h = if landing { h.max(proposed) } else { proposed }.min(opts.h_max);

            let y = match chart {
                Chart::Xy => u[0],
                Chart::Xz => unmagnify(u[0], eps),
            };
            let switch_to = match (chart, policy) {
                (Chart::Xy, Policy::Auto) if use_z && y.abs() < Y_LO && y.abs() > core => Some(Chart::Xz),
                (Chart::Xy, Policy::Magnified) if y.abs() > core => Some(Chart::Xz),
                (Chart::Xz, Policy::Auto) if y.abs() > Y_HI => Some(Chart::Xy),
                (Chart::Xz, _) if y.abs() < m => Some(Chart::Xy),
                _ => None,
            };
            if let Some(to) = switch_to {
                let y_after;
                match to {
                    Chart::Xz => {
                        u[0] = magnify(y, eps);
                        y_after = unmagnify(u[0], eps);
                    }
                    Chart::Xy => {
                        u[0] = y;
                        y_after = y;
                    }
                }
                log.push(ChartSwitch {
                    t,
                    from: chart,
                    to,
                    y_before: y,
                    y_after,
                });
                chart = to;
            }
            samples.push(sample(t, x0 + t, u[0], chart, eps));
        }
    }

    Ok(Trajectory {
        samples,
        coordinate_log: log,
        epsilon: eps,
        mixing_integral: u[1],
        log_sensitivity: u[2],
    })
}

fn sample(t: f64, x: f64, u: f64, chart: Chart, eps: f64) -> Sample {
    let (y, z) = match chart {
        Chart::Xy => (u, magnify(u, eps)),
        Chart::Xz => (unmagnify(u, eps), u),
    };
    Sample { t, x, y, z, chart }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnspec::parse_piecewise;

    #[test]
    fn constant_slow_curve_is_invariant() {
        let f = parse_piecewise("piece [0, 5]: 1").unwrap();
        let scn = Scenario::with_m(f, 0.01, 0.1, (0.0, 1.0), 5.0).unwrap();
        let tr = simulate(&scn).unwrap();
        for s in &tr.samples {
            assert!((s.y - 1.0).abs() < 1e-9);
            assert_eq!(s.x, 0.0 + s.t);
        }
        assert!((tr.last().x - 5.0).abs() < 1e-12);
    }

    #[test]
    fn samples_are_dense_and_increasing() {
        let f = parse_piecewise("piece [0, 2*pi): cos(x)+cos(2*x)+0.4 ; piece [2*pi, 12]: -1").unwrap();
        let scn = Scenario::with_rho(f, 0.01, -0.4, (0.0, 2.0), 12.0).unwrap();
        let tr = simulate(&scn).unwrap();
        for w in tr.samples.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].x - w[0].x <= 1e-2 + 1e-12);
        }
        assert!(tr.samples.iter().any(|s| s.chart == Chart::Xz));
        // lands on the jump
        let jump = 2.0 * std::f64::consts::PI;
        assert!(tr.samples.iter().any(|s| (s.x - jump).abs() < 1e-12));
        for sw in &tr.coordinate_log {
            assert!((sw.y_after - sw.y_before).abs() <= 1e-9 * sw.y_before.abs());
        }
        for s in &tr.samples {
            if s.y.abs() > 1e-200 {
                assert!((magnify(s.y, 0.01) / s.z - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn variational_log_matches_finite_difference() {
        let f = parse_piecewise("periodic 2*pi; piece [0, pi): cos(x) ; piece [pi, 2*pi): 1 + 1.5*sin(x)").unwrap();
        let base = Scenario::with_m(f, 1.0, 0.5, (0.0, 0.3), 2.0 * std::f64::consts::PI).unwrap();
        let tr = simulate(&base).unwrap();
        let h = 1e-6;
        let up = simulate(&base.clone().with_origin((0.0, 0.3 + h))).unwrap();
        let dn = simulate(&base.clone().with_origin((0.0, 0.3 - h))).unwrap();
        let fd = (up.last().y - dn.last().y) / (2.0 * h);
        assert!((fd.ln() - tr.log_sensitivity).abs() < 1e-4, "{fd} {}", tr.log_sensitivity);
    }
}
