mod common;

use common::{dense_first_hit, f, Hit, CISIM, RETARD10, RETARD5, TWO_PATCH};
use proptest::prelude::*;
use slowfast_core::constrained::{c_trajectory, exit_point, Branch, CTrajectoryOptions, Segment};
use slowfast_core::fnspec::PiecewiseFn;

fn family(i: usize) -> PiecewiseFn {
    f([RETARD5, RETARD10, TWO_PATCH, CISIM][i])
}

/// Abscissa window used for random entries, and the scan horizon.
fn entry_range(g: &PiecewiseFn) -> (f64, f64, f64) {
    match g.period() {
        Some(p) => (0.0, p, 40.0),
        None => (0.0, 6.0, g.end()),
    }
}

#[test]
fn retard5_exit_matches_dense_scan() {
    let g = f(RETARD5);
    let t1 = g.sign_changes().unwrap()[0].theta;
    let e = exit_point(&g, -0.4, t1).unwrap();
    let hit = dense_first_hit(&g, -0.4, t1, 12.0, 1e-4).unwrap();
    assert!(matches!(hit, Hit::Minus(_)));
    assert_eq!(e.branch, Some(Branch::Plus2Rho));
    assert!((hit.x() - e.x_star).abs() < 1e-6);
    assert!((g.integrate(t1, e.x_star).unwrap() + 0.8).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn exit_point_matches_dense_scan(which in 0usize..4, u in 0.0f64..1.0, rho in -0.6f64..-0.01) {
        let g = family(which);
        let (lo, hi, horizon) = entry_range(&g);
        let x = lo + (hi - lo) * u;
        let e = exit_point(&g, rho, x).unwrap();
        let x_end = if g.period().is_some() { x + horizon } else { horizon };
        match dense_first_hit(&g, rho, x, x_end, 1e-4) {
            Some(hit) => {
                prop_assert!((hit.x() - e.x_star).abs() < 2e-4, "{hit:?} vs {e:?}");
                let expected = match hit {
                    Hit::Minus(_) => Branch::Plus2Rho,
                    Hit::Plus(_) => Branch::Minus2Rho,
                    Hit::Zero(_) => Branch::Zero,
                };
                prop_assert_eq!(e.branch, Some(expected));
            }
            None => prop_assert!(!e.is_bounded() || e.x_star > x_end - 1e-3),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exit_is_monotone_in_rho(which in 0usize..4, u in 0.0f64..1.0, a in -0.6f64..-0.01, b in -0.6f64..-0.01) {
        let g = family(which);
        let (lo, hi, _) = entry_range(&g);
        let x = lo + (hi - lo) * u;
        let (r1, r2) = (a.min(b), a.max(b));
        let s1 = exit_point(&g, r1, x).unwrap().x_star;
        let s2 = exit_point(&g, r2, x).unwrap().x_star;
        prop_assert!(s1 >= s2, "S({r1}) = {s1} < S({r2}) = {s2}");
    }

    #[test]
    fn delay_vanishes_with_rho(which in 0usize..4, u in 0.0f64..1.0) {
        let g = family(which);
        let (lo, hi, _) = entry_range(&g);
        let x = lo + (hi - lo) * u;
        let d = exit_point(&g, -1e-8, x).unwrap().delay();
        prop_assert!(d > 0.0 && d < 1e-3, "{d}");
    }

    #[test]
    fn chains_close_and_follow_rules(
        which in 0usize..4,
        u in 0.0f64..1.0,
        y0 in prop_oneof![-3.0f64..-0.05, 0.05f64..3.0],
        rho in -0.6f64..-0.02,
    ) {
        let g = family(which);
        let (lo, hi, _) = entry_range(&g);
        let x0 = lo + (hi - lo) * u;
        let x_max = if g.period().is_some() { x0 + 4.0 * std::f64::consts::PI } else { g.end() };
        let c = c_trajectory(&g, rho, (x0, y0), CTrajectoryOptions { x_max, ..Default::default() }).unwrap();
        prop_assert!(!c.segments.is_empty());
        prop_assert_eq!(c.segments[0].start(&g), (x0, y0));
        if let Err(e) = c.check_rules(&g) {
            return Err(TestCaseError::fail(e));
        }
        for s in &c.segments {
            if let Segment::Horizontal { x_from, x_to, branch: Some(_) } = *s {
                prop_assert_eq!(exit_point(&g, rho, x_from).unwrap().x_star, x_to);
            }
        }
    }

    /// A zero-branch exit returns to the side of the axis it came from; the
    /// other branches land on the opposite side.
    #[test]
    fn branch_decides_the_side(
        which in 0usize..4,
        u in 0.0f64..1.0,
        y0 in prop_oneof![-3.0f64..-0.05, 0.05f64..3.0],
        rho in -0.6f64..-0.02,
    ) {
        let g = family(which);
        let (lo, hi, _) = entry_range(&g);
        let x0 = lo + (hi - lo) * u;
        let x_max = if g.period().is_some() { x0 + 4.0 * std::f64::consts::PI } else { g.end() };
        let c = c_trajectory(&g, rho, (x0, y0), CTrajectoryOptions { x_max, ..Default::default() }).unwrap();
        for (i, s) in c.segments.iter().enumerate() {
            let Segment::Horizontal { branch: Some(b), .. } = *s else { continue };
            let before = match c.segments[i - 1] {
                Segment::Slow { x_to, .. } => g.value(x_to - 1e-7).signum(),
                Segment::Vertical { y_from, .. } => y_from.signum(),
                Segment::Horizontal { .. } => unreachable!(),
            };
            let Some(Segment::Vertical { y_to, .. }) = c.segments.get(i + 1) else { continue };
            let same = y_to.signum() == before;
            prop_assert_eq!(same, b == Branch::Zero, "segment {}", i);
        }
    }
}
