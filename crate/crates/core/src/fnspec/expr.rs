//! Closed-form scalar expressions in one variable `x`.

use std::fmt;

/// Expression tree over a single abscissa `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Integer power.
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Abs(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, n) => a.eval(x).powi(*n),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
            Expr::Abs(a) => a.eval(x).abs(),
        }
    }

    /// Symbolic derivative with respect to `x`.
    ///
    /// `abs` differentiates to `sgn(u)·u'`, which is exact away from the
    /// zeros of `u`.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) => Num(0.0),
            X => Num(1.0),
            Neg(a) => neg(a.derivative()),
            Add(a, b) => add(a.derivative(), b.derivative()),
            Sub(a, b) => sub(a.derivative(), b.derivative()),
            Mul(a, b) => add(
                mul(a.derivative(), (**b).clone()),
                mul((**a).clone(), b.derivative()),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(), (**b).clone()),
                    mul((**a).clone(), b.derivative()),
                ),
                pow((**b).clone(), 2),
            ),
            Pow(a, n) => match *n {
                0 => Num(0.0),
                1 => a.derivative(),
                n => mul(
                    mul(Num(n as f64), pow((**a).clone(), n - 1)),
                    a.derivative(),
                ),
            },
            Sin(a) => mul(Cos(a.clone()), a.derivative()),
            Cos(a) => neg(mul(Sin(a.clone()), a.derivative())),
            Exp(a) => mul(Exp(a.clone()), a.derivative()),
            Abs(a) => mul(
                div((**a).clone(), Abs(a.clone())),
                a.derivative(),
            ),
        }
    }

    /// True when the tree contains no `x`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::X => false,
            Expr::Neg(a)
            | Expr::Pow(a, _)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Exp(a)
            | Expr::Abs(a) => a.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    /// Collects the denominators of every division node.
    pub(crate) fn denominators<'a>(&'a self, out: &mut Vec<&'a Expr>) {
        match self {
            Expr::Num(_) | Expr::X => {}
            Expr::Neg(a)
            | Expr::Pow(a, _)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Exp(a)
            | Expr::Abs(a) => a.denominators(out),
            Expr::Div(a, b) => {
                a.denominators(out);
                b.denominators(out);
                out.push(b);
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.denominators(out);
                b.denominators(out);
            }
        }
    }
}

// Constructors that fold the trivial cases so derivative trees stay small.

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        (Expr::Num(z), e) | (e, Expr::Num(z)) if z == 0.0 => e,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        (e, Expr::Num(z)) if z == 0.0 => e,
        (Expr::Num(z), e) if z == 0.0 => neg(e),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        (Expr::Num(z), _) | (_, Expr::Num(z)) if z == 0.0 => Expr::Num(0.0),
        (Expr::Num(o), e) | (e, Expr::Num(o)) if o == 1.0 => e,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(z), _) if z == 0.0 => Expr::Num(0.0),
        (e, Expr::Num(o)) if o == 1.0 => e,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, n: i32) -> Expr {
    match (a, n) {
        (_, 0) => Expr::Num(1.0),
        (e, 1) => e,
        (Expr::Num(v), n) => Expr::Num(v.powi(n)),
        (a, n) => Expr::Pow(Box::new(a), n),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::X => write!(f, "x"),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, n) => write!(f, "({a})^{n}"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Abs(a) => write!(f, "abs({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnspec::parser::parse_expr;

    fn central(e: &Expr, x: f64) -> f64 {
        let h = 1e-6;
        (e.eval(x + h) - e.eval(x - h)) / (2.0 * h)
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let cases = [
            "cos(x)+cos(2*x)+0.4",
            "x^3 - 2*x/(1+x^2)",
            "exp(-x)*sin(3*x)",
            "abs(x - 0.3)^2 + 1/x",
            "-(x^-2)",
        ];
        for src in cases {
            let e = parse_expr(src).unwrap();
            let d = e.derivative();
            for k in 1..50 {
                let x = 0.05 + 0.037 * k as f64;
                let fd = central(&e, x);
                let sym = d.eval(x);
                assert!(
                    (fd - sym).abs() <= 1e-5 * sym.abs().max(1.0),
                    "{src} at {x}: fd {fd} vs {sym}"
                );
            }
        }
    }

    #[test]
    fn constant_detection() {
        assert!(parse_expr("2*pi + cos(1)").unwrap().is_constant());
        assert!(!parse_expr("2*pi + cos(x)").unwrap().is_constant());
    }

    #[test]
    fn folding_keeps_derivative_of_constant_trivial() {
        let d = parse_expr("-1").unwrap().derivative();
        assert_eq!(d, Expr::Num(0.0));
        let d = parse_expr("x").unwrap().derivative();
        assert_eq!(d, Expr::Num(1.0));
    }
}
