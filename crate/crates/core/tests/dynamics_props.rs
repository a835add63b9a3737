mod common;

use common::{f, RETARD10, RETARD5, TWO_PATCH};
use proptest::prelude::*;
use slowfast_core::dynamics::{
    field_xy, field_xz, magnify, simulate, simulate_zchart, unmagnify, Chart, Scenario, Trajectory,
};

fn retard5(eps: f64, rho: f64) -> Scenario {
    Scenario::with_rho(f(RETARD5), eps, rho, (0.0, 2.0), 12.0).unwrap()
}

fn check_trajectory(tr: &Trajectory, x0: f64) {
    for s in &tr.samples {
        assert_eq!(s.x - (x0 + s.t), 0.0);
    }
    for w in tr.samples.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!(w[1].x - w[0].x <= 1e-2 + 1e-12);
    }
    for sw in &tr.coordinate_log {
        assert!((sw.y_after - sw.y_before).abs() <= 1e-9 * sw.y_before.abs(), "{sw:?}");
    }
}

#[test]
fn field_examples() {
    let scn = retard5(0.01, -0.4);
    let v = field_xy(&scn, 0.0, 2.0).unwrap();
    assert!((v - 80.0).abs() < 1e-9);
    assert_eq!(field_xy(&scn, 0.5, scn.f.value(0.5)).unwrap(), 0.0);
    let at_axis = field_xy(&scn, 0.5, 0.0).unwrap();
    assert!((at_axis / (scn.m() / 0.01 * scn.f.value(0.5)) - 1.0).abs() < 1e-12);

    // z = 1 where f vanishes
    let t1 = scn.f.sign_changes().unwrap()[0].theta;
    let v = field_xz(&scn, t1, 1.0).unwrap();
    assert!((v + (1.0 + (2.0 * -0.4f64 / 0.01).exp()).sqrt()).abs() < 1e-9);

    // band: ρ + 10ε < ln z < −10ε
    for lz in [-0.3, -0.2, -0.11] {
        let z = f64::exp(lz);
        let v = field_xz(&scn, 0.3, z).unwrap();
        let band = z * scn.f.value(0.3);
        assert!((v / band - 1.0).abs() < 1e-4, "{lz}");
    }
}

#[test]
fn simulated_runs_are_well_formed() {
    for (scn, x0) in [
        (retard5(0.01, -0.4), 0.0),
        (retard5(0.01, -0.1), 0.0),
        (retard5(0.1, -0.4), 0.0),
        (Scenario::with_rho(f(TWO_PATCH), 0.02, -0.15, (0.5, 1.0), 12.0).unwrap(), 0.5),
    ] {
        let tr = simulate(&scn).unwrap();
        check_trajectory(&tr, x0);
        // the magnified chart is only needed once m is below e^{-6}
        let uses_z = tr.samples.iter().any(|s| s.chart == Chart::Xz);
        assert_eq!(uses_z, scn.log_m() < -6.0);
    }
}

#[test]
fn runs_are_deterministic() {
    let scn = retard5(0.02, -0.4);
    assert_eq!(simulate(&scn).unwrap().to_csv(), simulate(&scn).unwrap().to_csv());
}

#[test]
fn zero_start_leaves_towards_sign_of_f() {
    for (src, sign) in [("piece [0, 2]: 0.7", 1.0), ("piece [0, 2]: -0.7", -1.0)] {
        let scn = Scenario::with_rho(f(src), 0.01, -0.5, (0.0, 0.0), 1.0).unwrap();
        let tr = simulate_zchart(&scn).unwrap();
        assert_eq!(tr.samples[0].z, 0.0);
        assert!(tr.samples[1..].iter().all(|s| s.z * sign > 0.0));
        assert!(tr.last().z * sign > 0.5);
    }
}

#[test]
fn band_solution_follows_exponential_of_integral() {
    let g = f(RETARD10);
    let (eps, rho) = (0.01, -0.6f64);
    let theta = g.sign_changes().unwrap()[1].theta;
    assert!(g.value(theta + 0.1) > 0.0);
    let z0 = rho.exp() * 1.05;
    let scn = Scenario::with_rho(g.clone(), eps, rho, (theta, unmagnify(z0, eps)), 3.0).unwrap();
    let tr = simulate_zchart(&scn).unwrap();
    let mut checked = 0;
    for s in tr.samples.iter().take_while(|s| s.z < 0.9) {
        let expected = z0 * g.integrate(theta, s.x).unwrap().exp();
        assert!((s.z - expected).abs() < 1e-3, "x = {}: {} vs {expected}", s.x, s.z);
        checked += 1;
    }
    assert!(checked > 50);
    assert!(tr.last().z >= 0.9);
}

#[test]
fn attraction_towards_slow_curve() {
    for eps in [0.04, 0.02, 0.01, 0.005] {
        let g = f("piece [0, 3]: 1 + 0.5*sin(x)");
        let scn = Scenario::with_rho(g.clone(), eps, -0.4, (0.0, 2.5), 3.0).unwrap();
        let tr = simulate(&scn).unwrap();
        let t = tr
            .samples
            .iter()
            .find(|s| (s.y - g.value(s.x)).abs() < 10.0 * eps)
            .unwrap()
            .t;
        assert!(t <= 20.0 * eps * (1.0 / eps).ln(), "eps {eps}: {t}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn magnifier_round_trip(log_y in -200.0f64..2.0, negative: bool, eps in 0.005f64..0.1) {
        let y = 10f64.powf(log_y) * if negative { -1.0 } else { 1.0 };
        let back = unmagnify(magnify(y, eps), eps);
        prop_assert!(((back - y) / y).abs() < 1e-12);
        prop_assert_eq!(magnify(y, eps).signum(), y.signum());
    }

    #[test]
    fn charts_agree_by_chain_rule(x in 0.0f64..12.0, log_y in -40.0f64..0.5, negative: bool, eps in 0.005f64..0.05) {
        let scn = retard5(eps, -0.4);
        let y = 10f64.powf(log_y) * if negative { -1.0 } else { 1.0 };
        let fy = field_xy(&scn, x, y).unwrap();
        prop_assume!((scn.f.value(x) - y).abs() > 1e-6 * y.abs());
        let via_y = eps * y.abs().powf(eps - 1.0) * fy;
        let direct = field_xz(&scn, x, magnify(y, eps)).unwrap();
        prop_assert!(((via_y - direct) / direct).abs() < 1e-6, "{via_y} vs {direct}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn halo_entry_time_is_logarithmic(eps in 0.005f64..0.05, y0 in 1.5f64..4.0) {
        let g = f("piece [0, 3]: 1");
        let scn = Scenario::with_rho(g, eps, -0.4, (0.0, y0), 3.0).unwrap();
        let tr = simulate(&scn).unwrap();
        check_trajectory(&tr, 0.0);
        let t = tr.samples.iter().find(|s| (s.y - 1.0).abs() < 10.0 * eps).unwrap().t;
        prop_assert!(t <= 20.0 * eps * (1.0 / eps).ln());
    }
}
