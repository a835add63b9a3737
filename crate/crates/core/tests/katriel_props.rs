mod common;

use std::f64::consts::PI;

use common::{f, KATRIEL_R1, KATRIEL_R2, TWO_PATCH};
use slowfast_core::analysis::hugging_distance;
use slowfast_core::constrained::{c_trajectory, CTrajectory, CTrajectoryOptions, Segment};
use slowfast_core::dynamics::simulate;
use slowfast_core::fnspec::{FnSpecError, PiecewiseFn, Side};
use slowfast_core::katriel::{
    delta, delta_rho, inflation_threshold, log_ratio_rhs, periodic_solution, predict_delta, reduce, reduce_rho,
    rho_star, KatrielError, KatrielModel,
};

fn model(eps: f64) -> KatrielModel {
    KatrielModel::new(f(KATRIEL_R1), f(KATRIEL_R2), eps).unwrap()
}

#[test]
fn difference_of_rates_is_the_two_patch_function() {
    let m = model(0.02);
    let g = f(TWO_PATCH);
    for i in 0..200 {
        let x = -3.0 + 0.05 * i as f64;
        assert!((m.f.value(x) - g.value(x)).abs() < 1e-12);
    }
    assert!(m.mean_r1 < 0.0 && m.mean_r2 < 0.0 && m.chi > 0.0);
}

#[test]
fn equal_rates_are_rejected() {
    let r = f(KATRIEL_R1);
    let err = KatrielModel::new(r.clone(), r, 0.02).unwrap_err();
    assert!(matches!(err, KatrielError::Fn(FnSpecError::HypothesisViolation { .. })), "{err:?}");
}

#[test]
fn reduction_sets_m_to_twice_mu() {
    let m = model(0.01);
    let mu = 0.5 * (-1.2f64 / 0.01).exp();
    let scn = reduce(&m, mu).unwrap();
    assert!((scn.rho() + 1.2).abs() < 1e-12);
    assert_eq!(scn.origin, (0.0, 1.0));
    assert!((reduce_rho(&m, -1.2).unwrap().log_m() * 0.01 + 1.2).abs() < 1e-12);
}

#[test]
fn decoupled_limit_is_exact() {
    for eps in [0.04, 0.02] {
        let m = model(eps);
        assert!((delta(&m, 0.0).unwrap() - m.mean_r1 - m.mean_r2).abs() < 1e-10);
    }
}

/// Integrates the log-ratio equation with classical RK4 and maps it through
/// `W = 2μ sinh V̄`; the result must match the reduced system.
#[test]
fn log_ratio_form_maps_onto_reduced_system() {
    let mu = 0.25;
    let eps = 0.5;
    let m = model(eps);
    let scn = reduce(&m, mu).unwrap();
    let tr = simulate(&scn).unwrap();
    let g = &m.f;

    let mut v = (scn.origin.1 / (2.0 * mu)).asinh();
    let mut x = scn.origin.0;
    let mut worst = 0.0f64;
    for s in &tr.samples[1..] {
        let n = ((s.x - x) / 1e-3).ceil().max(1.0) as usize;
        let h = (s.x - x) / n as f64;
        for i in 0..n {
            let xa = x + i as f64 * h;
            // left-side values at the far end keep each substep on one piece
            let at = |t: f64| if t == s.x { g.eval(t, Side::Left).unwrap() } else { g.value(t) };
            let k1 = log_ratio_rhs(at(xa), mu, eps, v);
            let k2 = log_ratio_rhs(at(xa + 0.5 * h), mu, eps, v + 0.5 * h * k1);
            let k3 = log_ratio_rhs(at(xa + 0.5 * h), mu, eps, v + 0.5 * h * k2);
            let k4 = log_ratio_rhs(at(xa + h), mu, eps, v + h * k3);
            v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        x = s.x;
        worst = worst.max((2.0 * mu * v.sinh() - s.y).abs());
    }
    assert!((x - 2.0 * PI).abs() < 1e-12);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn period_map_contracts() {
    let m = model(1.0);
    for mu in [0.05, 0.25, 1.0] {
        let sol = periodic_solution(&reduce(&m, mu).unwrap()).unwrap();
        let c = sol.contraction();
        assert!(c > 0.0 && c < 1.0, "mu {mu}: {c}");
    }
    // strong mixing
    let sol = periodic_solution(&reduce(&m, 5.0).unwrap()).unwrap();
    assert!(sol.contraction() < 0.05, "{}", sol.contraction());
}

#[test]
fn small_m_solution_hugs_periodic_c_trajectory() {
    let eps = 0.01;
    let rho = -1.2;
    let m = model(eps);
    let sol = periodic_solution(&reduce_rho(&m, rho).unwrap()).unwrap();
    assert!(sol.log_contraction < 0.0);

    // a C-trajectory from (0, 1) settles on its periodic regime after one period
    let ctraj = c_trajectory(&m.f, rho, (0.0, 1.0), CTrajectoryOptions { x_max: 6.0 * PI, ..Default::default() }).unwrap();
    let verticals: Vec<f64> = ctraj
        .segments
        .iter()
        .filter_map(|s| match *s {
            Segment::Vertical { x, .. } => Some(x),
            _ => None,
        })
        .collect();
    let mut period = sol.period.clone();
    for s in &mut period.samples {
        s.x += 4.0 * PI;
    }
    let rep = hugging_distance(&period, &ctraj, &m.f, 0.1 * eps.sqrt());
    let mut worst = 0.0f64;
    for s in &period.samples {
        if verticals.iter().any(|v| (s.x - v).abs() < 0.1) {
            continue;
        }
        let c = c_value(&ctraj, &m.f, s.x);
        worst = worst.max((s.y - c).abs());
    }
    assert!(worst < 0.1, "{worst} (hug report overall {})", rep.overall);
}

/// Ordinate of the C-trajectory at abscissa `x` away from its verticals.
fn c_value(ctraj: &CTrajectory, f: &PiecewiseFn, x: f64) -> f64 {
    for s in &ctraj.segments {
        match *s {
            Segment::Slow { x_from, x_to, .. } if x >= x_from && x < x_to => return f.value(x),
            Segment::Horizontal { x_from, x_to, .. } if x >= x_from && x < x_to => return 0.0,
            _ => {}
        }
    }
    f64::NAN
}

#[test]
fn simulated_growth_rate_matches_predictor_at_small_delay() {
    let m = model(0.01);
    let sim = delta_rho(&m, -0.05).unwrap();
    let pred = predict_delta(&m, -0.05).unwrap();
    assert!((sim - pred).abs() < 0.05, "{sim} vs {pred}");
}

#[test]
fn predictor_is_bounded_below() {
    let m = model(0.02);
    let rs = rho_star(&m.f).unwrap();
    assert!(rs < 0.0);
    assert!(matches!(predict_delta(&m, rs - 0.05), Err(KatrielError::RhoTooNegative { .. })));
    let mut prev = f64::NEG_INFINITY;
    for i in 0..20 {
        let rho = rs * (1.0 - i as f64 / 20.0) * (1.0 - 1e-9);
        let d = predict_delta(&m, rho).unwrap();
        assert!(d >= prev);
        prev = d;
    }
}

#[test]
fn threshold_result_is_consistent() {
    let m = model(0.02);
    let res = inflation_threshold(&m).unwrap();
    assert!(res.rho_star < -0.05);
    assert_eq!(res.mu_star, 0.5 * (res.rho_star / 0.02).exp());
    assert!(res.mu_star < 1e-3);
    let below = res.delta_curve.iter().filter(|p| p.0 < res.rho_star).last().unwrap();
    let above = res.delta_curve.iter().find(|p| p.0 > res.rho_star).unwrap();
    assert!(below.1 < 0.0 && above.1 > 0.0);

    // more delay lost means more mass lost, while m stays exponentially small
    let curve: Vec<_> = res.delta_curve.iter().filter(|p| p.0 <= -0.1).collect();
    assert!(curve.len() > 40);
    for w in curve.windows(2) {
        assert!(w[1].1 >= w[0].1 - 1e-6, "{:?} then {:?}", w[0], w[1]);
    }
}
