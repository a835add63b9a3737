//! Recursive-descent parser for the piecewise function grammar.
//!
//! ```text
//! spec   := [ "periodic" expr [";"] ] piece { ";" piece } [";"]
//! piece  := "piece" "[" expr "," expr ( ")" | "]" ) ":" expr
//! expr   := term { ("+" | "-") term }
//! term   := unary { ("*" | "/") unary }
//! unary  := ("-" | "+") unary | power
//! power  := atom [ "^" ["-" | "+"] integer ]
//! atom   := number | "x" | "pi" | ("sin" | "cos" | "exp" | "abs") "(" expr ")" | "(" expr ")"
//! ```
//!
//! Interval endpoints and the period must be constant expressions.

use super::expr::Expr;
use super::FnSpecError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Sym(c) => format!("'{c}'"),
            Tok::End => "end of input".to_string(),
        }
    }
}

/// One `piece [a, b): expr` entry before validation.
#[derive(Debug, Clone)]
pub struct RawPiece {
    pub start: f64,
    pub end: f64,
    pub closed_end: bool,
    pub expr: Expr,
}

#[derive(Debug, Clone)]
pub struct RawSpec {
    pub period: Option<f64>,
    pub pieces: Vec<RawPiece>,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, FnSpecError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let mut j = i;
            let mut seen_exp = false;
            while j < chars.len() {
                let d = chars[j].1;
                if d.is_ascii_digit() || d == '.' {
                    j += 1;
                } else if (d == 'e' || d == 'E') && !seen_exp {
                    // exponent only if followed by a digit or a signed digit
                    let next = chars.get(j + 1).map(|p| p.1);
                    let next2 = chars.get(j + 2).map(|p| p.1);
                    let ok = matches!(next, Some(n) if n.is_ascii_digit())
                        || (matches!(next, Some('+') | Some('-'))
                            && matches!(next2, Some(n) if n.is_ascii_digit()));
                    if !ok {
                        break;
                    }
                    seen_exp = true;
                    j += 2;
                } else {
                    break;
                }
            }
            let end = chars.get(j).map_or(src.len(), |p| p.0);
            let text = &src[pos..end];
            let v: f64 = text.parse().map_err(|_| FnSpecError::Syntax {
                pos,
                expected: "number".into(),
                found: format!("'{text}'"),
            })?;
            out.push((pos, Tok::Num(v)));
            i = j;
        } else if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].1.is_alphanumeric() || chars[j].1 == '_') {
                j += 1;
            }
            let end = chars.get(j).map_or(src.len(), |p| p.0);
            out.push((pos, Tok::Ident(src[pos..end].to_string())));
            i = j;
        } else if "+-*/^()[],:;".contains(c) {
            out.push((pos, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(FnSpecError::Syntax {
                pos,
                expected: "expression".into(),
                found: format!("'{c}'"),
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> FnSpecError {
        FnSpecError::Syntax {
            pos: self.pos(),
            expected: expected.to_string(),
            found: self.peek().describe(),
        }
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), FnSpecError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            Err(self.error(&format!("'{c}'")))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn spec(&mut self) -> Result<RawSpec, FnSpecError> {
        let mut period = None;
        if self.is_keyword("periodic") {
            self.bump();
            period = Some(self.constant("period")?);
            self.eat_sym(';');
        }
        let mut pieces = vec![self.piece()?];
        loop {
            if self.eat_sym(';') {
                if *self.peek() == Tok::End {
                    break;
                }
                pieces.push(self.piece()?);
            } else if *self.peek() == Tok::End {
                break;
            } else {
                return Err(self.error("';' or end of input"));
            }
        }
        Ok(RawSpec { period, pieces })
    }

    fn piece(&mut self) -> Result<RawPiece, FnSpecError> {
        if !self.is_keyword("piece") {
            return Err(self.error("'piece'"));
        }
        self.bump();
        self.expect_sym('[')?;
        let start = self.constant("interval start")?;
        self.expect_sym(',')?;
        let end = self.constant("interval end")?;
        let closed_end = if self.eat_sym(']') {
            true
        } else if self.eat_sym(')') {
            false
        } else {
            return Err(self.error("')' or ']'"));
        };
        self.expect_sym(':')?;
        let expr = self.expr()?;
        Ok(RawPiece {
            start,
            end,
            closed_end,
            expr,
        })
    }

    fn constant(&mut self, what: &str) -> Result<f64, FnSpecError> {
        let pos = self.pos();
        let e = self.expr()?;
        if !e.is_constant() {
            return Err(FnSpecError::Syntax {
                pos,
                expected: format!("constant {what}"),
                found: "expression in x".into(),
            });
        }
        let v = e.eval(0.0);
        if !v.is_finite() {
            return Err(FnSpecError::Syntax {
                pos,
                expected: format!("finite {what}"),
                found: format!("{v}"),
            });
        }
        Ok(v)
    }

    fn expr(&mut self) -> Result<Expr, FnSpecError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_sym('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_sym('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, FnSpecError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_sym('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_sym('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, FnSpecError> {
        if self.eat_sym('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat_sym('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, FnSpecError> {
        let base = self.atom()?;
        if !self.eat_sym('^') {
            return Ok(base);
        }
        let negative = if self.eat_sym('-') {
            true
        } else {
            self.eat_sym('+');
            false
        };
        match self.peek().clone() {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                self.bump();
                let n = v as i32;
                Ok(Expr::Pow(Box::new(base), if negative { -n } else { n }))
            }
            _ => Err(self.error("integer exponent")),
        }
    }

    fn atom(&mut self) -> Result<Expr, FnSpecError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let wrap: fn(Box<Expr>) -> Expr = match name.as_str() {
                    "x" => {
                        self.bump();
                        return Ok(Expr::X);
                    }
                    "pi" => {
                        self.bump();
                        return Ok(Expr::Num(std::f64::consts::PI));
                    }
                    "sin" => Expr::Sin,
                    "cos" => Expr::Cos,
                    "exp" => Expr::Exp,
                    "abs" => Expr::Abs,
                    _ => return Err(self.error("'x', 'pi', a number, or sin/cos/exp/abs")),
                };
                self.bump();
                self.expect_sym('(')?;
                let arg = self.expr()?;
                self.expect_sym(')')?;
                Ok(wrap(Box::new(arg)))
            }
            _ => Err(self.error("expression")),
        }
    }
}

pub fn parse_spec(src: &str) -> Result<RawSpec, FnSpecError> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
    };
    p.spec()
}

/// Parses a single expression in `x`.
pub fn parse_expr(src: &str) -> Result<Expr, FnSpecError> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error("operator or end of input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse_expr("-x^2 + 3*x - 4/2").unwrap();
        assert_eq!(e.eval(2.0), -4.0 + 6.0 - 2.0);
        let e = parse_expr("2^-1").unwrap();
        assert_eq!(e.eval(0.0), 0.5);
        let e = parse_expr("1.5e-1 + 2E2").unwrap();
        assert_eq!(e.eval(0.0), 200.15);
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse_spec("piece[0,2*pi):cos(x)+cos(2*x)+0.4;piece[2*pi,12]:-1").unwrap();
        let b = parse_spec("  piece [ 0 , 2 * pi ) :\n cos( x ) + cos(2*x) + 0.4 ;\n piece [2*pi, 12] : -1 ;")
            .unwrap();
        assert_eq!(a.pieces.len(), 2);
        assert_eq!(b.pieces.len(), 2);
        assert_eq!(a.pieces[1].start, 2.0 * PI);
        assert!(b.pieces[1].closed_end);
        assert!(!b.pieces[0].closed_end);
    }

    #[test]
    fn periodic_header() {
        let s = parse_spec("periodic 2*pi; piece [0, pi): cos(x); piece [pi, 2*pi): 1 + 1.5*sin(x)")
            .unwrap();
        assert_eq!(s.period, Some(2.0 * PI));
        assert_eq!(s.pieces.len(), 2);
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_spec("piece [0, 1): x +") {
            Err(FnSpecError::Syntax { pos, .. }) => assert_eq!(pos, 17),
            other => panic!("unexpected {other:?}"),
        }
        match parse_spec("piece [0, 1: x") {
            Err(FnSpecError::Syntax { pos, expected, .. }) => {
                assert_eq!(pos, 11);
                assert!(expected.contains(')'));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_spec("piece [0, x): 1"),
            Err(FnSpecError::Syntax { .. })
        ));
        assert!(matches!(parse_expr("x^1.5"), Err(FnSpecError::Syntax { .. })));
        assert!(matches!(parse_expr("tan(x)"), Err(FnSpecError::Syntax { .. })));
        assert!(matches!(parse_expr("x $ 2"), Err(FnSpecError::Syntax { pos: 2, .. })));
    }
}
