#![allow(dead_code)]

use slowfast_core::fnspec::{parse_piecewise, PiecewiseFn, Side};

pub const RETARD5: &str = "piece [0, 2*pi): cos(x)+cos(2*x)+0.4 ; piece [2*pi, 12]: -1";
pub const RETARD10: &str = "periodic 2*pi; piece [0, 2*pi): 0.5*cos(x)+0.1";
pub const TWO_PATCH: &str = "periodic 2*pi; piece [0, pi): cos(x) ; piece [pi, 2*pi): 1 + 1.5*sin(x)";
pub const CISIM: &str = "periodic 2*pi; piece [0, pi): 0.5*cos(x) ; piece [pi, 2*pi): 1.5 + 1.8*sin(x)";
pub const KATRIEL_R1: &str =
    "periodic 2*pi; piece [0, pi): -0.18 + 0.5*cos(x) ; piece [pi, 2*pi): -0.18 + 0.5*(1 + 1.5*sin(x))";
pub const KATRIEL_R2: &str =
    "periodic 2*pi; piece [0, pi): -0.18 - 0.5*cos(x) ; piece [pi, 2*pi): -0.18 - 0.5*(1 + 1.5*sin(x))";

pub fn f(src: &str) -> PiecewiseFn {
    parse_piecewise(src).unwrap()
}

/// Which level the running integral of `f` reaches first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hit {
    Minus(f64),
    Plus(f64),
    Zero(f64),
}

impl Hit {
    pub fn x(self) -> f64 {
        match self {
            Hit::Minus(x) | Hit::Plus(x) | Hit::Zero(x) => x,
        }
    }
}

/// First-hit scan of `F(x) = ∫_{x_entry}^x f` against the levels `±2ρ` and
/// the return to zero, with composite Simpson cells of width `step`. Cell
/// edges include the breakpoints of `f`, so jumps are never straddled.
pub fn dense_first_hit(f: &PiecewiseFn, rho: f64, x_entry: f64, x_max: f64, step: f64) -> Option<Hit> {
    let mut nodes = Vec::new();
    let n = ((x_max - x_entry) / step).ceil() as usize;
    for i in 0..=n {
        nodes.push((x_entry + i as f64 * step).min(x_max));
    }
    nodes.extend(f.breakpoints_between(x_entry, x_max).unwrap());
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-13);

    let level = 2.0 * rho.abs();
    let mut big = 0.0f64;
    let mut acc = 0.0;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let fa = f.eval(a, Side::Right).unwrap();
        let fb = f.eval(b, Side::Left).unwrap();
        let fm = f.value(0.5 * (a + b));
        let next = acc + (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let lerp = |target: f64| a + (b - a) * (target - acc) / (next - acc);
        if next <= -level {
            return Some(Hit::Minus(lerp(-level)));
        }
        if next >= level {
            return Some(Hit::Plus(lerp(level)));
        }
        if big > 1e-12 && acc != 0.0 && (next == 0.0 || next.signum() != acc.signum()) {
            return Some(Hit::Zero(lerp(0.0)));
        }
        big = big.max(next.abs());
        acc = next;
    }
    None
}

/// Deterministic low-discrepancy point in `[0, 1)`.
pub fn halton(i: usize, base: usize) -> f64 {
    let mut r = 0.0;
    let mut fr = 1.0 / base as f64;
    let mut k = i;
    while k > 0 {
        r += fr * (k % base) as f64;
        k /= base;
        fr /= base as f64;
    }
    r
}
