//! C-trajectories of the constrained system: chains of vertical, slow-curve
//! and horizontal segments, with exit points determined by the running
//! integral of `f`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::fnspec::{FnSpecError, PiecewiseFn, Side, SignChangeKind};
use crate::numeric::quad::integrate_smooth;
use crate::numeric::roots::bisect;

/// Bisection tolerance on the exit abscissa.
pub const EXIT_TOL: f64 = 1e-12;
/// `|F|` must exceed this before a return to zero counts as an exit.
pub const ZERO_ARM: f64 = 1e-12;
/// Marching step used to bracket the first target hit.
const MARCH_STEP: f64 = 4e-3;
/// Periodic functions are scanned this many periods before giving up.
const MAX_PERIODS: f64 = 200.0;

pub const DEFAULT_MAX_SEGMENTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstrainedError {
    #[error("rho must be negative, got {0}")]
    NonNegativeRho(f64),
    #[error("origin lies on the axis y = 0")]
    DegenerateOrigin,
    #[error("origin x = {0} leaves no room in the domain")]
    DomainExhausted(f64),
    #[error("rho grid must be negative and increasing")]
    UnsortedGrid,
    #[error(transparent)]
    Fn(#[from] FnSpecError),
}

/// Which target the running integral reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `∫ f = 2ρ` (a negative value).
    Plus2Rho,
    /// `∫ f = 0` after leaving zero.
    Zero,
    /// `∫ f = −2ρ` (a positive value).
    Minus2Rho,
}

impl Branch {
    pub fn target(self, rho: f64) -> f64 {
        match self {
            Branch::Plus2Rho => 2.0 * rho,
            Branch::Zero => 0.0,
            Branch::Minus2Rho => -2.0 * rho,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::Plus2Rho => "plus2rho",
            Branch::Zero => "zero",
            Branch::Minus2Rho => "minus2rho",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitPoint {
    pub x_entry: f64,
    /// `+∞` when the integral never reaches a target.
    pub x_star: f64,
    /// `None` exactly when `x_star` is infinite.
    pub branch: Option<Branch>,
}

impl ExitPoint {
    pub fn delay(&self) -> f64 {
        self.x_star - self.x_entry
    }

    pub fn is_bounded(&self) -> bool {
        self.x_star.is_finite()
    }
}

/// `S_ρ(x)`: the first `x* > x_entry` where `∫_{x_entry}^{x*} f` hits one of
/// `2ρ`, `0` (after having left zero) or `−2ρ`.
pub fn exit_point(f: &PiecewiseFn, rho: f64, x_entry: f64) -> Result<ExitPoint, ConstrainedError> {
    if !(rho < 0.0) {
        return Err(ConstrainedError::NonNegativeRho(rho));
    }
    if !f.contains(x_entry) {
        return Err(FnSpecError::OutOfDomain { x: x_entry }.into());
    }
    let limit = match f.period() {
        Some(p) => x_entry + MAX_PERIODS * p,
        None => f.end(),
    };
    let unbounded = ExitPoint {
        x_entry,
        x_star: f64::INFINITY,
        branch: None,
    };
    if !(limit > x_entry) {
        return Ok(unbounded);
    }
    let targets = [Branch::Plus2Rho, Branch::Zero, Branch::Minus2Rho];
    let mut acc = 0.0;
    let mut armed = false;
    for span in f.spans(x_entry, limit)? {
        let expr = &f.pieces()[span.piece].expr;
        let g = |x: f64| expr.eval(x - span.shift);
        // cut at sign changes of f so that F is monotone on every step
        let mut cuts = vec![span.from];
        while let Some(c) = f.next_sign_change(*cuts.last().unwrap()) {
            if c.theta >= span.to {
                break;
            }
            cuts.push(c.theta);
        }
        cuts.push(span.to);
        let steps = cuts.windows(2).flat_map(|w| {
            let n = ((w[1] - w[0]) / MARCH_STEP).ceil().max(1.0) as usize;
            (1..=n).map(move |k| if k == n { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / n as f64 })
        });
        let mut u = span.from;
        for v in steps {
            if v <= u {
                continue;
            }
            let next = acc + integrate_smooth(g, u, v, 1e-14);
            let mut best: Option<(f64, Branch)> = None;
            for b in targets {
                let t = b.target(rho);
                let hit = if b == Branch::Zero {
                    armed && acc != 0.0 && (next == 0.0 || (next > 0.0) != (acc > 0.0))
                } else {
                    acc != t && (acc - t) * (next - t) <= 0.0
                };
                if hit {
                    let base = acc;
                    let x = bisect(
                        |x| base + integrate_smooth(g, u, x, 1e-14) - t,
                        u,
                        v,
                        EXIT_TOL,
                    );
                    if best.map_or(true, |(bx, _)| x < bx) {
                        best = Some((x, b));
                    }
                }
            }
            if let Some((x_star, branch)) = best {
                return Ok(ExitPoint {
                    x_entry,
                    x_star,
                    branch: Some(branch),
                });
            }
            if next.abs() > ZERO_ARM {
                armed = true;
            }
            acc = next;
            u = v;
        }
    }
    Ok(unbounded)
}

/// Delay `R_ρ(x) = S_ρ(x) − x` for each `ρ` of an increasing negative grid.
pub fn delay_profile(
    f: &PiecewiseFn,
    x_entry: f64,
    rho_grid: &[f64],
) -> Result<Vec<(f64, f64)>, ConstrainedError> {
    if rho_grid.iter().any(|&r| !(r < 0.0)) || rho_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ConstrainedError::UnsortedGrid);
    }
    rho_grid
        .iter()
        .map(|&rho| Ok((rho, exit_point(f, rho, x_entry)?.delay())))
        .collect()
}

/// How a slow-curve segment ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlowEnd {
    SignChange(SignChangeKind),
    DomainEnd,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Vertical {
        x: f64,
        y_from: f64,
        y_to: f64,
    },
    Slow {
        x_from: f64,
        x_to: f64,
        end: SlowEnd,
    },
    /// `branch` is `None` when the segment runs to `+∞` or was truncated.
    Horizontal {
        x_from: f64,
        x_to: f64,
        branch: Option<Branch>,
    },
}

impl Segment {
    pub fn kind(&self) -> &'static str {
        match self {
            Segment::Vertical { .. } => "vertical",
            Segment::Slow { .. } => "slow",
            Segment::Horizontal { .. } => "horizontal",
        }
    }

    pub fn start(&self, f: &PiecewiseFn) -> (f64, f64) {
        match *self {
            Segment::Vertical { x, y_from, .. } => (x, y_from),
            Segment::Slow { x_from, .. } => (x_from, f.value(x_from)),
            Segment::Horizontal { x_from, .. } => (x_from, 0.0),
        }
    }

    pub fn end(&self, f: &PiecewiseFn) -> (f64, f64) {
        match *self {
            Segment::Vertical { x, y_to, .. } => (x, y_to),
            Segment::Slow { x_to, end, .. } => {
                let y = match end {
                    SlowEnd::SignChange(SignChangeKind::ZeroCrossing) => 0.0,
                    _ => f.eval(x_to, Side::Left).unwrap_or(f64::NAN),
                };
                (x_to, y)
            }
            Segment::Horizontal { x_to, .. } => (x_to, 0.0),
        }
    }

    pub fn x_range(&self) -> (f64, f64) {
        match *self {
            Segment::Vertical { x, .. } => (x, x),
            Segment::Slow { x_from, x_to, .. } | Segment::Horizontal { x_from, x_to, .. } => {
                (x_from, x_to)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    MaxSegments,
    DomainEnd,
    Unbounded,
    Truncated,
}

#[derive(Debug, Clone)]
pub struct CTrajectory {
    pub segments: Vec<Segment>,
    pub origin: (f64, f64),
    pub rho: f64,
    pub end: EndReason,
}

#[derive(Debug, Clone, Copy)]
pub struct CTrajectoryOptions {
    pub max_segments: usize,
    /// Segments are cut at this abscissa.
    pub x_max: f64,
}

impl Default for CTrajectoryOptions {
    fn default() -> Self {
        CTrajectoryOptions {
            max_segments: DEFAULT_MAX_SEGMENTS,
            x_max: f64::INFINITY,
        }
    }
}

enum Next {
    Slow(f64),
    Horizontal(f64),
}

/// Builds the unique C-trajectory issued from `origin`.
pub fn c_trajectory(
    f: &PiecewiseFn,
    rho: f64,
    origin: (f64, f64),
    opts: CTrajectoryOptions,
) -> Result<CTrajectory, ConstrainedError> {
    if !(rho < 0.0) {
        return Err(ConstrainedError::NonNegativeRho(rho));
    }
    let (x0, y0) = origin;
    if y0 == 0.0 {
        return Err(ConstrainedError::DegenerateOrigin);
    }
    let x_stop = opts.x_max.min(f.end());
    if !f.contains(x0) || x0 >= x_stop {
        return Err(ConstrainedError::DomainExhausted(x0));
    }
    let mut segs = Vec::new();
    let f0 = f.eval(x0, Side::Right)?;
    let mut next = if f0 * y0 > 0.0 {
        segs.push(Segment::Vertical {
            x: x0,
            y_from: y0,
            y_to: f0,
        });
        Next::Slow(x0)
    } else {
        segs.push(Segment::Vertical {
            x: x0,
            y_from: y0,
            y_to: 0.0,
        });
        Next::Horizontal(x0)
    };
    let finish = |segs, end| CTrajectory {
        segments: segs,
        origin,
        rho,
        end,
    };
    loop {
        if segs.len() >= opts.max_segments {
            return Ok(finish(segs, EndReason::MaxSegments));
        }
        match next {
            Next::Slow(x) => {
                let theta = f.next_sign_change(x);
                match theta {
                    Some(c) if c.theta <= x_stop => {
                        segs.push(Segment::Slow {
                            x_from: x,
                            x_to: c.theta,
                            end: SlowEnd::SignChange(c.kind),
                        });
                        if c.kind == SignChangeKind::Jump {
                            segs.push(Segment::Vertical {
                                x: c.theta,
                                y_from: f.eval(c.theta, Side::Left)?,
                                y_to: 0.0,
                            });
                        }
                        next = Next::Horizontal(c.theta);
                    }
                    _ => {
                        let (end, reason) = if x_stop < f.end() {
                            (SlowEnd::Truncated, EndReason::Truncated)
                        } else {
                            (SlowEnd::DomainEnd, EndReason::DomainEnd)
                        };
                        if x_stop > x {
                            segs.push(Segment::Slow {
                                x_from: x,
                                x_to: x_stop,
                                end,
                            });
                        }
                        return Ok(finish(segs, reason));
                    }
                }
            }
            Next::Horizontal(x) => {
                if x >= x_stop {
                    let reason = if x_stop < f.end() {
                        EndReason::Truncated
                    } else {
                        EndReason::DomainEnd
                    };
                    return Ok(finish(segs, reason));
                }
                let e = exit_point(f, rho, x)?;
                if !e.is_bounded() {
                    segs.push(Segment::Horizontal {
                        x_from: x,
                        x_to: f64::INFINITY,
                        branch: None,
                    });
                    return Ok(finish(segs, EndReason::Unbounded));
                }
                if e.x_star > x_stop {
                    segs.push(Segment::Horizontal {
                        x_from: x,
                        x_to: x_stop,
                        branch: None,
                    });
                    return Ok(finish(segs, EndReason::Truncated));
                }
                segs.push(Segment::Horizontal {
                    x_from: x,
                    x_to: e.x_star,
                    branch: e.branch,
                });
                segs.push(Segment::Vertical {
                    x: e.x_star,
                    y_from: 0.0,
                    y_to: f.eval(e.x_star, Side::Right)?,
                });
                next = Next::Slow(e.x_star);
            }
        }
    }
}

impl CTrajectory {
    pub fn horizontal_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Horizontal { .. }))
            .count()
    }

    /// Completed horizontal segments as `(entry, exit, branch)`.
    pub fn exits(&self) -> Vec<(f64, f64, Branch)> {
        self.segments
            .iter()
            .filter_map(|s| match *s {
                Segment::Horizontal {
                    x_from,
                    x_to,
                    branch: Some(b),
                } => Some((x_from, x_to, b)),
                _ => None,
            })
            .collect()
    }

    /// Replays the succession rules against the emitted chain. Returns a
    /// description of the first violation.
    pub fn check_rules(&self, f: &PiecewiseFn) -> Result<(), String> {
        for (i, w) in self.segments.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let (ex, ey) = a.end(f);
            let (sx, sy) = b.start(f);
            if ex != sx || (ey - sy).abs() > 1e-12 {
                return Err(format!(
                    "segment {i} ends at ({ex}, {ey}) but {} starts at ({sx}, {sy})",
                    i + 1
                ));
            }
            let ok = match (a, b) {
                (Segment::Vertical { y_to, .. }, Segment::Horizontal { .. }) => y_to == 0.0,
                (Segment::Vertical { .. }, Segment::Slow { .. }) => true,
                (Segment::Horizontal { branch: Some(_), x_to, .. }, Segment::Vertical { y_from, y_to, .. }) => {
                    y_from == 0.0 && y_to == f.value(x_to)
                }
                (Segment::Slow { end: SlowEnd::SignChange(k), .. }, Segment::Horizontal { .. }) => {
                    k == SignChangeKind::ZeroCrossing
                }
                (Segment::Slow { end: SlowEnd::SignChange(SignChangeKind::Jump), .. }, Segment::Vertical { y_to, .. }) => {
                    y_to == 0.0
                }
                _ => false,
            };
            if !ok {
                return Err(format!("segment {} ({}) cannot follow {}", i + 1, b.kind(), a.kind()));
            }
        }
        for (i, s) in self.segments.iter().enumerate() {
            if let Segment::Vertical { y_from, y_to, .. } = *s {
                let (lo, hi) = (y_from.min(y_to), y_from.max(y_to));
                if lo < 0.0 && hi > 0.0 {
                    return Err(format!("vertical segment {i} crosses the axis"));
                }
            }
            if let Segment::Slow { x_to, end: SlowEnd::SignChange(_), .. } = *s {
                let near = f
                    .next_sign_change(x_to - 1e-9)
                    .map_or(false, |c| (c.theta - x_to).abs() < 1e-9);
                if !near {
                    return Err(format!("slow segment {i} does not end at a sign change"));
                }
            }
        }
        Ok(())
    }

    /// One CSV row per segment: `kind,x_from,y_from,x_to,y_to,branch`.
    pub fn to_csv(&self, f: &PiecewiseFn) -> String {
        let mut out = String::from("kind,x_from,y_from,x_to,y_to,branch\n");
        for s in &self.segments {
            let (x0, y0) = s.start(f);
            let (x1, y1) = s.end(f);
            let branch = match s {
                Segment::Horizontal { branch: Some(b), .. } => b.label(),
                Segment::Horizontal { branch: None, .. } => "none",
                _ => "",
            };
            let _ = writeln!(out, "{},{x0},{y0},{x1},{y1},{branch}", s.kind());
        }
        out
    }
}
