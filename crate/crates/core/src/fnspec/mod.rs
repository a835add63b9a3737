//! Piecewise-C¹ scalar functions: parsing, evaluation with one-sided limits,
//! quadrature split at breakpoints, and location of the sign changes.

pub mod expr;
pub mod parser;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use expr::Expr;
use parser::RawSpec;

use crate::numeric::quad::integrate_smooth;
use crate::numeric::roots::bisect;

/// Absolute tolerance for locating zeros of a piece.
pub const ZERO_TOL: f64 = 1e-12;
/// A zero whose derivative is below this is treated as tangential.
pub const TANGENT_TOL: f64 = 1e-8;
/// Absolute accuracy target of [`PiecewiseFn::integrate`].
pub const QUAD_TOL: f64 = 1e-10;

// Sampling step used to bracket zeros and derivative extrema.
const SCAN_STEP: f64 = 2e-3;
// Two boundaries closer than this (relative to the domain scale) coincide.
const JOIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FnSpecError {
    #[error("syntax error at offset {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: usize,
        expected: String,
        found: String,
    },
    #[error("pieces overlap at x = {at}")]
    Overlap { at: f64 },
    #[error("gap between pieces at x = {at}")]
    Gap { at: f64 },
    #[error("piece {index} has an empty interval")]
    EmptyPiece { index: usize },
    #[error("period {period} does not match the extent {extent} covered by the pieces")]
    PeriodMismatch { period: f64, extent: f64 },
    #[error("piece {piece} is singular or non-finite near x = {x}")]
    Singular { piece: usize, x: f64 },
    #[error("x = {x} is outside the domain")]
    OutOfDomain { x: f64 },
    #[error("hypothesis violated at x = {x}: {detail}")]
    HypothesisViolation { x: f64, detail: String },
    #[error("incompatible domains")]
    DomainMismatch,
}

/// Selects a one-sided limit at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `[start, end]`; evaluation at `end` uses the last piece.
    Interval { start: f64, end: f64 },
    /// Fundamental period `[start, start + period)`, repeated on ℝ.
    Periodic { start: f64, period: f64 },
}

#[derive(Debug, Clone)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub expr: Expr,
    pub deriv: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignChangeKind {
    ZeroCrossing,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    PlusToMinus,
    MinusToPlus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignChange {
    pub theta: f64,
    pub kind: SignChangeKind,
    pub direction: Direction,
}

/// A stretch of the real line governed by one piece. For periodic functions
/// `shift` is the multiple of the period to subtract before evaluating the
/// piece expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub from: f64,
    pub to: f64,
    pub piece: usize,
    pub shift: f64,
}

#[derive(Debug, Clone)]
pub struct PiecewiseFn {
    pieces: Vec<Piece>,
    domain: Domain,
    changes: Vec<SignChange>,
    violations: Vec<HypothesisWarning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisWarning {
    pub x: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieceBounds {
    pub start: f64,
    pub end: f64,
    pub sup_abs: f64,
    pub sup_abs_deriv: f64,
}

/// Diagnostics produced by [`PiecewiseFn::validate_hypotheses`].
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub bounds: Vec<PieceBounds>,
    pub sign_changes: Vec<SignChange>,
    pub warnings: Vec<HypothesisWarning>,
}

impl HypothesisReport {
    pub fn is_valid(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Parses the scenario grammar into a validated function.
pub fn parse_piecewise(text: &str) -> Result<PiecewiseFn, FnSpecError> {
    PiecewiseFn::from_raw(parser::parse_spec(text)?)
}

impl FromStr for PiecewiseFn {
    type Err = FnSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_piecewise(s)
    }
}

impl PiecewiseFn {
    pub fn from_raw(raw: RawSpec) -> Result<Self, FnSpecError> {
        let mut raw_pieces = raw.pieces;
        for (index, p) in raw_pieces.iter().enumerate() {
            if !(p.end > p.start) {
                return Err(FnSpecError::EmptyPiece { index });
            }
        }
        raw_pieces.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap_or(Ordering::Equal));
        let scale = raw_pieces
            .iter()
            .map(|p| p.start.abs().max(p.end.abs()))
            .fold(1.0, f64::max);
        let tol = JOIN_TOL * scale;
        for w in raw_pieces.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            if prev.end > next.start + tol || (prev.closed_end && prev.end >= next.start - tol) {
                return Err(FnSpecError::Overlap { at: next.start });
            }
            if prev.end < next.start - tol {
                return Err(FnSpecError::Gap { at: prev.end });
            }
        }
        let last = raw_pieces.len() - 1;
        let start = raw_pieces[0].start;
        let end = raw_pieces[last].end;
        let domain = match raw.period {
            Some(period) => {
                if raw_pieces[last].closed_end {
                    return Err(FnSpecError::Overlap { at: end });
                }
                if !(period > 0.0) || (end - start - period).abs() > tol {
                    return Err(FnSpecError::PeriodMismatch {
                        period,
                        extent: end - start,
                    });
                }
                Domain::Periodic { start, period }
            }
            None => Domain::Interval { start, end },
        };
        // snap each start onto the previous end
        let mut pieces: Vec<Piece> = Vec::with_capacity(raw_pieces.len());
        for p in raw_pieces {
            let s = pieces.last().map_or(p.start, |q: &Piece| q.end);
            let deriv = p.expr.derivative();
            pieces.push(Piece {
                start: s,
                end: p.end,
                expr: p.expr,
                deriv,
            });
        }
        if let Domain::Periodic { start, period } = domain {
            pieces[last].end = start + period;
        }
        Self::build(pieces, domain)
    }

    fn build(pieces: Vec<Piece>, domain: Domain) -> Result<Self, FnSpecError> {
        for (i, p) in pieces.iter().enumerate() {
            check_regular(i, p)?;
        }
        let mut f = PiecewiseFn {
            pieces,
            domain,
            changes: Vec::new(),
            violations: Vec::new(),
        };
        let (changes, violations) = f.scan();
        f.changes = changes;
        f.violations = violations;
        Ok(f)
    }

    /// A constant function on `[start, end]`.
    pub fn constant(value: f64, start: f64, end: f64) -> Result<Self, FnSpecError> {
        if !(end > start) {
            return Err(FnSpecError::EmptyPiece { index: 0 });
        }
        Self::build(
            vec![Piece {
                start,
                end,
                expr: Expr::Num(value),
                deriv: Expr::Num(0.0),
            }],
            Domain::Interval { start, end },
        )
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn period(&self) -> Option<f64> {
        match self.domain {
            Domain::Periodic { period, .. } => Some(period),
            Domain::Interval { .. } => None,
        }
    }

    /// Lower end of the domain (or of the fundamental period).
    pub fn start(&self) -> f64 {
        match self.domain {
            Domain::Interval { start, .. } | Domain::Periodic { start, .. } => start,
        }
    }

    /// Upper end of the domain; `+∞` for periodic functions.
    pub fn end(&self) -> f64 {
        match self.domain {
            Domain::Interval { end, .. } => end,
            Domain::Periodic { .. } => f64::INFINITY,
        }
    }

    /// Interior piece boundaries of the stored pieces, increasing.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces[1..].iter().map(|p| p.start).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        match self.domain {
            Domain::Interval { start, end } => x >= start && x <= end,
            Domain::Periodic { .. } => x.is_finite(),
        }
    }

    /// Reduces `x` into the stored pieces: returns (piece index, shift).
    fn locate(&self, x: f64, side: Side) -> Result<(usize, f64), FnSpecError> {
        if !self.contains(x) {
            return Err(FnSpecError::OutOfDomain { x });
        }
        let (u, shift) = match self.domain {
            Domain::Interval { .. } => (x, 0.0),
            Domain::Periodic { start, period } => {
                let k = ((x - start) / period).floor();
                let mut shift = k * period;
                let mut u = x - shift;
                // guard against rounding pushing u outside [start, start+period)
                if u < start {
                    shift -= period;
                    u = x - shift;
                } else if u >= start + period {
                    shift += period;
                    u = x - shift;
                }
                if side == Side::Left && u <= start {
                    shift -= period;
                    u = x - shift;
                }
                (u, shift)
            }
        };
        let idx = match side {
            Side::Right => self.pieces.partition_point(|p| p.start <= u).saturating_sub(1),
            Side::Left => self.pieces.partition_point(|p| p.start < u).saturating_sub(1),
        };
        Ok((idx, shift))
    }

    /// Value at `x`; at a breakpoint `side` selects the one-sided limit.
    pub fn eval(&self, x: f64, side: Side) -> Result<f64, FnSpecError> {
        let (i, shift) = self.locate(x, side)?;
        Ok(self.pieces[i].expr.eval(x - shift))
    }

    /// Right-continuous value; panics outside the domain.
    pub fn value(&self, x: f64) -> f64 {
        self.eval(x, Side::Right)
            .unwrap_or_else(|e| panic!("PiecewiseFn::value: {e}"))
    }

    /// Derivative of the governing piece at `x`.
    pub fn derivative(&self, x: f64, side: Side) -> Result<f64, FnSpecError> {
        let (i, shift) = self.locate(x, side)?;
        Ok(self.pieces[i].deriv.eval(x - shift))
    }

    /// Evaluates piece `span.piece` at `x`, extended by its own expression
    /// up to and including both ends of the span.
    pub fn eval_span(&self, span: &Span, x: f64) -> f64 {
        self.pieces[span.piece].expr.eval(x - span.shift)
    }

    /// Decomposes `[a, b]` (`a < b`) into spans governed by single pieces.
    pub fn spans(&self, a: f64, b: f64) -> Result<Vec<Span>, FnSpecError> {
        if !self.contains(a) {
            return Err(FnSpecError::OutOfDomain { x: a });
        }
        if !self.contains(b) {
            return Err(FnSpecError::OutOfDomain { x: b });
        }
        let mut out = Vec::new();
        if !(b > a) {
            return Ok(out);
        }
        let (mut piece, mut shift) = self.locate(a, Side::Right)?;
        let mut from = a;
        loop {
            let to = (self.pieces[piece].end + shift).min(b);
            if to > from {
                out.push(Span {
                    from,
                    to,
                    piece,
                    shift,
                });
            }
            if to >= b {
                break;
            }
            from = to;
            piece += 1;
            if piece == self.pieces.len() {
                match self.domain {
                    Domain::Periodic { period, .. } => {
                        piece = 0;
                        shift += period;
                    }
                    Domain::Interval { .. } => break,
                }
            }
        }
        Ok(out)
    }

    /// Breakpoints strictly inside `(a, b)`, unwrapped for periodic functions.
    pub fn breakpoints_between(&self, a: f64, b: f64) -> Result<Vec<f64>, FnSpecError> {
        let spans = self.spans(a, b)?;
        Ok(spans.iter().skip(1).map(|s| s.from).collect())
    }

    /// `∫_a^b f`, split at every breakpoint; reversed limits negate.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64, FnSpecError> {
        if b < a {
            return self.integrate(b, a).map(|v| -v);
        }
        let spans = self.spans(a, b)?;
        let n = spans.len().max(1) as f64;
        Ok(spans
            .iter()
            .map(|s| {
                let e = &self.pieces[s.piece].expr;
                let shift = s.shift;
                integrate_smooth(|x| e.eval(x - shift), s.from, s.to, QUAD_TOL / n)
            })
            .sum())
    }

    /// Average over the domain (one period when periodic).
    pub fn mean(&self) -> f64 {
        let (a, b) = match self.domain {
            Domain::Interval { start, end } => (start, end),
            Domain::Periodic { start, period } => (start, start + period),
        };
        self.integrate(a, b).expect("domain bounds are in the domain") / (b - a)
    }

    /// All sign changes of `f` on its domain (one period when periodic), in
    /// increasing order.
    pub fn sign_changes(&self) -> Result<Vec<SignChange>, FnSpecError> {
        match self.violations.first() {
            Some(v) => Err(FnSpecError::HypothesisViolation {
                x: v.x,
                detail: v.detail.clone(),
            }),
            None => Ok(self.changes.clone()),
        }
    }

    /// Sign changes regardless of hypothesis violations.
    pub fn sign_changes_unchecked(&self) -> &[SignChange] {
        &self.changes
    }

    /// Smallest sign change strictly greater than `x`, unwrapping periods.
    pub fn next_sign_change(&self, x: f64) -> Option<SignChange> {
        if self.changes.is_empty() {
            return None;
        }
        match self.domain {
            Domain::Interval { .. } => self.changes.iter().find(|c| c.theta > x).copied(),
            Domain::Periodic { start, period } => {
                let k = ((x - start) / period).floor() - 1.0;
                (0..4)
                    .flat_map(|j| {
                        let shift = (k + j as f64) * period;
                        self.changes.iter().map(move |c| SignChange {
                            theta: c.theta + shift,
                            ..*c
                        })
                    })
                    .find(|c| c.theta > x)
            }
        }
    }

    /// Sampled bounds per piece plus the sign-change scan and any violation
    /// of the regularity hypotheses.
    pub fn validate_hypotheses(&self) -> HypothesisReport {
        let bounds = self
            .pieces
            .iter()
            .map(|p| {
                let mut sup_abs: f64 = 0.0;
                let mut sup_abs_deriv: f64 = 0.0;
                for x in sample_grid(p.start, p.end) {
                    sup_abs = sup_abs.max(p.expr.eval(x).abs());
                    sup_abs_deriv = sup_abs_deriv.max(p.deriv.eval(x).abs());
                }
                PieceBounds {
                    start: p.start,
                    end: p.end,
                    sup_abs,
                    sup_abs_deriv,
                }
            })
            .collect();
        HypothesisReport {
            bounds,
            sign_changes: self.changes.clone(),
            warnings: self.violations.clone(),
        }
    }

    /// Pointwise combination `op(self, other)` over the union of breakpoints.
    /// Both functions must share the same domain.
    pub fn combine(
        &self,
        other: &PiecewiseFn,
        op: fn(Box<Expr>, Box<Expr>) -> Expr,
    ) -> Result<PiecewiseFn, FnSpecError> {
        let same = match (self.domain, other.domain) {
            (Domain::Interval { start: a, end: b }, Domain::Interval { start: c, end: d }) => {
                a == c && b == d
            }
            (
                Domain::Periodic { start: a, period: p },
                Domain::Periodic { start: c, period: q },
            ) => a == c && p == q,
            _ => false,
        };
        if !same {
            return Err(FnSpecError::DomainMismatch);
        }
        let mut cuts: Vec<f64> = self
            .pieces
            .iter()
            .chain(other.pieces.iter())
            .flat_map(|p| [p.start, p.end])
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        cuts.dedup_by(|a, b| (*a - *b).abs() <= JOIN_TOL * a.abs().max(1.0));
        let mut pieces = Vec::new();
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let (i, _) = self.locate(mid, Side::Right)?;
            let (j, _) = other.locate(mid, Side::Right)?;
            let expr = op(
                Box::new(self.pieces[i].expr.clone()),
                Box::new(other.pieces[j].expr.clone()),
            );
            let deriv = expr.derivative();
            pieces.push(Piece {
                start: w[0],
                end: w[1],
                expr,
                deriv,
            });
        }
        Self::build(pieces, self.domain)
    }

    /// Samples along the domain (one period) in order, tagged with piece.
    fn samples(&self) -> Vec<Sample> {
        let mut out = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            for x in sample_grid(p.start, p.end) {
                out.push(Sample {
                    x,
                    v: p.expr.eval(x),
                    piece: i,
                    shift: 0.0,
                });
            }
        }
        out
    }

    fn scan(&self) -> (Vec<SignChange>, Vec<HypothesisWarning>) {
        let mut violations = Vec::new();
        let mut samples = self.samples();

        for (i, p) in self.pieces.iter().enumerate() {
            let vals: Vec<f64> = samples.iter().filter(|s| s.piece == i).map(|s| s.v).collect();
            if vals.iter().all(|v| v.abs() <= 1e-14) {
                violations.push(HypothesisWarning {
                    x: p.start,
                    detail: format!("piece {i} vanishes identically"),
                });
                continue;
            }
            // zeros at extrema of the piece are tangential
            let grid = sample_grid(p.start, p.end);
            for w in grid.windows(2) {
                let (d0, d1) = (p.deriv.eval(w[0]), p.deriv.eval(w[1]));
                if d0 == 0.0 || d0 * d1 < 0.0 {
                    let xi = bisect(|x| p.deriv.eval(x), w[0], w[1], ZERO_TOL);
                    if p.expr.eval(xi).abs() <= 1e-9 {
                        violations.push(HypothesisWarning {
                            x: xi,
                            detail: format!("tangential zero of piece {i}"),
                        });
                    }
                }
            }
        }

        if let Domain::Periodic { period, .. } = self.domain {
            // wrap the head of the first piece, up to its first nonzero
            // sample, to see a change at the seam
            let head = samples
                .iter()
                .position(|s| s.v != 0.0)
                .map_or(0, |k| k + 1);
            let wrap: Vec<Sample> = samples[..head]
                .iter()
                .map(|s| Sample {
                    x: s.x + period,
                    shift: period,
                    ..*s
                })
                .collect();
            samples.extend(wrap);
        }

        let nonzero: Vec<&Sample> = samples.iter().filter(|s| s.v != 0.0).collect();
        let mut changes = Vec::new();
        for w in nonzero.windows(2) {
            let (p, q) = (w[0], w[1]);
            if (p.v > 0.0) == (q.v > 0.0) {
                continue;
            }
            let direction = if p.v > 0.0 {
                Direction::PlusToMinus
            } else {
                Direction::MinusToPlus
            };
            let (theta, kind, slope) = if p.piece == q.piece && p.shift == q.shift {
                let e = &self.pieces[p.piece].expr;
                let shift = p.shift;
                let t = bisect(|x| e.eval(x - shift), p.x, q.x, ZERO_TOL);
                let slope = self.pieces[p.piece].deriv.eval(t - shift);
                (t, SignChangeKind::ZeroCrossing, Some(slope))
            } else {
                // the change sits on the first boundary after p
                let b = self.pieces[p.piece].end + p.shift;
                let left = self.pieces[p.piece].expr.eval(b - p.shift);
                let (qi, qs) = (q.piece, q.shift);
                let right = self.pieces[qi].expr.eval(b - qs);
                if (left - right).abs() <= ZERO_TOL {
                    let dl = self.pieces[p.piece].deriv.eval(b - p.shift);
                    let dr = self.pieces[qi].deriv.eval(b - qs);
                    let slope = if dl.abs() >= dr.abs() { dl } else { dr };
                    (b, SignChangeKind::ZeroCrossing, Some(slope))
                } else {
                    (b, SignChangeKind::Jump, None)
                }
            };
            if let Some(s) = slope {
                if s.abs() < TANGENT_TOL {
                    violations.push(HypothesisWarning {
                        x: theta,
                        detail: format!("zero with |f'| = {:e} below {TANGENT_TOL:e}", s.abs()),
                    });
                }
            }
            let theta = match self.domain {
                Domain::Periodic { start, period } if theta >= start + period => theta - period,
                _ => theta,
            };
            changes.push(SignChange {
                theta,
                kind,
                direction,
            });
        }
        changes.sort_by(|a, b| a.theta.partial_cmp(&b.theta).unwrap_or(Ordering::Equal));
        changes.dedup_by(|a, b| (a.theta - b.theta).abs() <= ZERO_TOL);
        violations.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap_or(Ordering::Equal));
        (changes, violations)
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    x: f64,
    v: f64,
    piece: usize,
    shift: f64,
}

/// Uniform grid over the closed interval with spacing at most `SCAN_STEP`.
fn sample_grid(a: f64, b: f64) -> Vec<f64> {
    let n = (((b - a) / SCAN_STEP).ceil() as usize).max(64);
    (0..=n)
        .map(|k| if k == n { b } else { a + (b - a) * k as f64 / n as f64 })
        .collect()
}

fn check_regular(index: usize, p: &Piece) -> Result<(), FnSpecError> {
    let mut dens = Vec::new();
    p.expr.denominators(&mut dens);
    let grid = sample_grid(p.start, p.end);
    for &x in &grid {
        let v = p.expr.eval(x);
        let d = p.deriv.eval(x);
        if !v.is_finite() || !d.is_finite() || dens.iter().any(|e| e.eval(x).abs() < 1e-12) {
            return Err(FnSpecError::Singular { piece: index, x });
        }
    }
    for den in dens {
        for w in grid.windows(2) {
            if den.eval(w[0]) * den.eval(w[1]) < 0.0 {
                return Err(FnSpecError::Singular {
                    piece: index,
                    x: 0.5 * (w[0] + w[1]),
                });
            }
        }
    }
    Ok(())
}

impl fmt::Display for PiecewiseFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Domain::Periodic { period, .. } = self.domain {
            write!(f, "periodic {period}; ")?;
        }
        let last = self.pieces.len() - 1;
        for (i, p) in self.pieces.iter().enumerate() {
            let close = if i == last && matches!(self.domain, Domain::Interval { .. }) {
                ']'
            } else {
                ')'
            };
            if i > 0 {
                write!(f, " ; ")?;
            }
            write!(f, "piece [{}, {}{}: {}", p.start, p.end, close, p.expr)?;
        }
        Ok(())
    }
}
