/// Bisection on a bracket `[a, b]` where `g(a)` and `g(b)` have opposite
/// signs (or one of them is zero). Stops once the bracket is narrower than
/// `tol` and returns its midpoint.
pub fn bisect<G: FnMut(f64) -> f64>(mut g: G, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut ga = g(a);
    if ga == 0.0 {
        return a;
    }
    let gb = g(b);
    if gb == 0.0 {
        return b;
    }
    debug_assert!(ga * gb < 0.0, "bisect: no sign change on [{a}, {b}]");
    // 200 halvings exhaust any f64 bracket
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}
