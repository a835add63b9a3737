mod common;

use common::{f, halton, CISIM, RETARD10, RETARD5, TWO_PATCH};
use proptest::prelude::*;
use slowfast_core::fnspec::{PiecewiseFn, Side, SignChangeKind};

fn fixtures() -> Vec<PiecewiseFn> {
    [RETARD5, RETARD10, TWO_PATCH, CISIM].iter().map(|s| f(s)).collect()
}

/// Finite window of the domain used for sampling.
fn window(g: &PiecewiseFn) -> (f64, f64) {
    match g.period() {
        Some(p) => (g.start() - p, g.start() + 2.0 * p),
        None => (g.start(), g.end()),
    }
}

fn simpson(g: &PiecewiseFn, a: f64, b: f64, h: f64) -> f64 {
    let n = (((b - a) / h).ceil() as usize).max(2) & !1;
    let h = (b - a) / n as f64;
    let mut s = g.value(a) + g.eval(b, Side::Left).unwrap();
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g.value(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn exactly_one_piece_governs_each_point() {
    for g in fixtures() {
        let (a, b) = window(&g);
        let p = g.period();
        for i in 0..10_000 {
            let x = a + (b - a) * (i as f64 + 0.5) / 10_000.0;
            let u = match p {
                Some(p) => x - ((x - g.start()) / p).floor() * p,
                None => x,
            };
            let governing = g
                .pieces()
                .iter()
                .filter(|pc| pc.start <= u && (u < pc.end || (p.is_none() && u == g.end() && pc.end == u)))
                .count();
            assert_eq!(governing, 1, "x = {x}");
        }
    }
}

#[test]
fn one_sided_values_agree_off_breakpoints() {
    for g in fixtures() {
        let (a, b) = window(&g);
        let mut cuts = g.breakpoints_between(a, b).unwrap();
        cuts.push(a);
        cuts.push(b);
        for i in 0..2_000 {
            let x = a + (b - a) * halton(i + 1, 2);
            if cuts.iter().any(|c| (c - x).abs() < 1e-9) {
                continue;
            }
            assert_eq!(g.eval(x, Side::Left).unwrap(), g.eval(x, Side::Right).unwrap());
        }
    }
}

#[test]
fn sign_changes_flip_sign() {
    let h = 1e-6;
    for g in fixtures() {
        let changes = g.sign_changes().unwrap();
        assert!(!changes.is_empty());
        for c in changes {
            let prod = g.value(c.theta - h) * g.value(c.theta + h);
            assert!(prod < 0.0, "theta = {}", c.theta);
        }
    }
}

#[test]
fn retard5_has_four_zeros_and_one_jump() {
    let g = f(RETARD5);
    let changes = g.sign_changes().unwrap();
    let jumps = changes.iter().filter(|c| c.kind == SignChangeKind::Jump).count();
    // four zeros of cos x + cos 2x + 0.4 on (0, 2π), then the jump to −1
    assert_eq!(changes.len() - jumps, 4);
    assert_eq!(jumps, 1);
    assert!((changes.last().unwrap().theta - 2.0 * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn derivative_matches_finite_difference() {
    let h = 1e-6;
    for g in fixtures() {
        let (a, b) = window(&g);
        let cuts = g.breakpoints_between(a, b).unwrap();
        let mut checked = 0;
        for i in 1..=1000 {
            let x = a + (b - a) * halton(i, 3);
            if cuts.iter().any(|c| (c - x).abs() < 1e-4) {
                continue;
            }
            let d = g.derivative(x, Side::Right).unwrap();
            let fd = (g.value(x + h) - g.value(x - h)) / (2.0 * h);
            assert!((d - fd).abs() <= 1e-5 * d.abs().max(1e-2), "x = {x}: {d} vs {fd}");
            checked += 1;
        }
        assert!(checked > 900);
    }
}

#[test]
fn integral_matches_simpson_oracle() {
    let g = f(RETARD5);
    let t1 = g.sign_changes().unwrap()[0].theta;
    let exact = g.integrate(t1, t1 + 1.0).unwrap();
    assert!((exact - simpson(&g, t1, t1 + 1.0, 1e-5)).abs() < 1e-8);

    let g = f(RETARD10);
    let period = g.integrate(0.0, 2.0 * std::f64::consts::PI).unwrap();
    assert!((period - 0.2 * std::f64::consts::PI).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn integral_is_additive(which in 0usize..4, u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..1.0) {
        let g = &fixtures()[which];
        let (lo, hi) = window(g);
        let mut p = [u, v, w].map(|s| lo + (hi - lo) * s);
        p.sort_by(f64::total_cmp);
        let [a, b, c] = p;
        let whole = g.integrate(a, c).unwrap();
        let split = g.integrate(a, b).unwrap() + g.integrate(b, c).unwrap();
        prop_assert!((whole - split).abs() <= 1e-9);
    }

    #[test]
    fn periodic_integral_is_shift_invariant(which in 1usize..4, a in -20.0f64..20.0) {
        let g = &fixtures()[which];
        let p = g.period().unwrap();
        let base = g.integrate(0.0, p).unwrap();
        prop_assert!((g.integrate(a, a + p).unwrap() - base).abs() < 1e-9);
    }
}
