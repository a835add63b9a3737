//! Comparison of simulated trajectories with C-trajectories: halo events,
//! axis episodes, hugging distance and ε-sweeps.

use std::fmt::Write as _;

use thiserror::Error;

use crate::constrained::{c_trajectory, CTrajectory, CTrajectoryOptions, ConstrainedError, Segment};
use crate::dynamics::{simulate, DynamicsError, Scenario, Trajectory};
use crate::fnspec::{PiecewiseFn, Side};

/// Spacing of the polyline standing in for a slow-curve segment.
const SLOW_STEP: f64 = 1e-3;
/// A sample may be matched to the current segment or to one of this many
/// segments after it.
const LOOKAHEAD: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("epsilons must be positive and strictly decreasing")]
    UnsortedEpsilons,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Constrained(#[from] ConstrainedError),
}

/// Default half-width of the band standing in for a halo.
pub fn default_delta(epsilon: f64) -> f64 {
    0.1 * epsilon.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaloKind {
    EnterAxis,
    ExitAxis,
    EnterCurve,
    ExitCurve,
}

impl HaloKind {
    pub fn label(self) -> &'static str {
        match self {
            HaloKind::EnterAxis => "enter-axis",
            HaloKind::ExitAxis => "exit-axis",
            HaloKind::EnterCurve => "enter-curve",
            HaloKind::ExitCurve => "exit-curve",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaloEvent {
    pub kind: HaloKind,
    pub t: f64,
    pub x: f64,
    pub delta: f64,
}

/// Crossings of `|y| = δ` and `|y − f(x)| = δ`, linearly interpolated
/// between samples and sorted by time. A run starting inside a band
/// reports an entry at its first sample.
pub fn detect_halo_events(traj: &Trajectory, f: &PiecewiseFn, delta: f64) -> Vec<HaloEvent> {
    let mut events = Vec::new();
    let s = &traj.samples;
    if s.is_empty() {
        return events;
    }
    let axis = |i: usize| s[i].y.abs() - delta;
    let curve = |i: usize| (s[i].y - f.eval(s[i].x, Side::Right).unwrap_or(f64::NAN)).abs() - delta;
    let bands: [(&dyn Fn(usize) -> f64, HaloKind, HaloKind); 2] = [
        (&axis, HaloKind::EnterAxis, HaloKind::ExitAxis),
        (&curve, HaloKind::EnterCurve, HaloKind::ExitCurve),
    ];
    for (g, enter, exit) in bands {
        let mut inside = g(0) < 0.0;
        if inside {
            events.push(HaloEvent {
                kind: enter,
                t: s[0].t,
                x: s[0].x,
                delta,
            });
        }
        let mut prev = g(0);
        for i in 1..s.len() {
            let cur = g(i);
            let now_inside = cur < 0.0;
            if now_inside != inside {
                let w = if cur != prev { prev / (prev - cur) } else { 1.0 };
                let w = w.clamp(0.0, 1.0);
                let t = s[i - 1].t + w * (s[i].t - s[i - 1].t);
                events.push(HaloEvent {
                    kind: if now_inside { enter } else { exit },
                    t,
                    x: traj.samples[0].x + t,
                    delta,
                });
                inside = now_inside;
            }
            prev = cur;
        }
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    events
}

/// A stay of the trajectory inside the axis band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisEpisode {
    pub enter_x: f64,
    /// Raw band exit; `None` if the run ends inside the band.
    pub exit_x: Option<f64>,
    /// Abscissa where `|y|` first reaches `|f(x)|/2` after the band exit,
    /// the midpoint of the fast jump that ends the episode.
    pub jump_x: Option<f64>,
    /// Sign changes of `y` during the episode.
    pub sign_changes: usize,
}

pub fn axis_episodes(traj: &Trajectory, f: &PiecewiseFn, delta: f64) -> Vec<AxisEpisode> {
    let events: Vec<_> = detect_halo_events(traj, f, delta)
        .into_iter()
        .filter(|e| matches!(e.kind, HaloKind::EnterAxis | HaloKind::ExitAxis))
        .collect();
    let s = &traj.samples;
    let mut out = Vec::new();
    let mut i = 0;
    while i < events.len() {
        if events[i].kind != HaloKind::EnterAxis {
            i += 1;
            continue;
        }
        let enter_x = events[i].x;
        let exit_x = events.get(i + 1).filter(|e| e.kind == HaloKind::ExitAxis).map(|e| e.x);
        let next_enter = events.get(i + 2).map_or(f64::INFINITY, |e| e.x);
        let end = exit_x.unwrap_or(f64::INFINITY);
        let mut sign_changes = 0;
        let mut last_sign = 0.0;
        // include the samples just outside the band on both sides
        let first = s.partition_point(|p| p.x < enter_x).saturating_sub(1);
        let last = (s.partition_point(|p| p.x <= end) + 1).min(s.len());
        for smp in &s[first..last] {
            if smp.y != 0.0 {
                let sg = smp.y.signum();
                if last_sign != 0.0 && sg != last_sign {
                    sign_changes += 1;
                }
                last_sign = sg;
            }
        }
        let jump_x = exit_x.map(|xe| {
            s.iter()
                .filter(|p| p.x >= xe && p.x < next_enter)
                .find(|p| p.y.abs() >= 0.5 * f.value(p.x).abs())
                .map_or(xe, |p| p.x)
        });
        out.push(AxisEpisode {
            enter_x,
            exit_x,
            jump_x,
            sign_changes,
        });
        i += if exit_x.is_some() { 2 } else { 1 };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitMatch {
    pub predicted: f64,
    pub simulated: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct HugReport {
    /// Sup distance of the samples assigned to each segment; `None` when no
    /// sample was assigned.
    pub per_segment: Vec<Option<f64>>,
    pub overall: f64,
    pub exits: Vec<ExitMatch>,
    /// Set when the number of axis episodes differs from the number of
    /// completed horizontal segments.
    pub mismatch: Option<String>,
    pub parameterization: &'static str,
}

impl HugReport {
    pub fn max_exit_error(&self) -> f64 {
        self.exits.iter().map(|e| e.error).fold(0.0, f64::max)
    }

    /// Rows `segment,kind,sup_distance` followed by `exit,predicted,simulated,error`.
    pub fn to_csv(&self, ctraj: &CTrajectory) -> String {
        let mut out = String::from("segment,kind,sup_distance\n");
        for (i, (s, d)) in ctraj.segments.iter().zip(&self.per_segment).enumerate() {
            let d = d.map_or(String::from("nan"), |v| v.to_string());
            let _ = writeln!(out, "{i},{},{d}", s.kind());
        }
        let _ = writeln!(out, "overall,,{}", self.overall);
        out.push_str("exit,predicted,simulated,error\n");
        for (i, e) in self.exits.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{}", e.predicted, e.simulated, e.error);
        }
        if let Some(m) = &self.mismatch {
            let _ = writeln!(out, "# mismatch: {m}");
        }
        out
    }
}

/// Geometry of one segment as a list of line pieces.
fn segment_geometry(seg: &Segment, f: &PiecewiseFn) -> Vec<((f64, f64), (f64, f64))> {
    match *seg {
        Segment::Vertical { x, y_from, y_to } => vec![((x, y_from), (x, y_to))],
        Segment::Horizontal { x_from, x_to, .. } => vec![((x_from, 0.0), (x_to, 0.0))],
        Segment::Slow { x_from, x_to, .. } => {
            let mut pts = Vec::new();
            let spans = f.spans(x_from, x_to).unwrap_or_default();
            for sp in &spans {
                let n = ((sp.to - sp.from) / SLOW_STEP).ceil().max(1.0) as usize;
                for k in 0..=n {
                    let x = sp.from + (sp.to - sp.from) * k as f64 / n as f64;
                    pts.push((x, f.eval_span(sp, x)));
                }
            }
            if pts.len() == 1 {
                pts.push(pts[0]);
            }
            pts.windows(2).map(|w| (w[0], w[1])).collect()
        }
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let w = if len2 == 0.0 || !len2.is_finite() {
        if b.0.is_infinite() {
            // ray to +∞ along the axis
            return if p.0 >= a.0 { (p.1 - a.1).abs() } else { (p.0 - a.0).hypot(p.1 - a.1) };
        }
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - w * dx).hypot(p.1 - a.1 - w * dy)
}

/// Distance from `p` to a polyline, only looking at pieces whose x-range
/// comes within `window` of `p`.
fn distance_to(geom: &[((f64, f64), (f64, f64))], p: (f64, f64), window: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &(a, b) in geom {
        let (lo, hi) = (a.0.min(b.0), a.0.max(b.0));
        if hi < p.0 - window || lo > p.0 + window {
            continue;
        }
        best = best.min(point_segment_distance(p, a, b));
    }
    if best.is_infinite() {
        // nothing nearby: fall back to the full scan
        for &(a, b) in geom {
            best = best.min(point_segment_distance(p, a, b));
        }
    }
    best
}

/// Sup distance between a trajectory and a C-trajectory under a monotone
/// matching: samples are visited in time order and each is assigned to the
/// nearest of the current segment and the next [`LOOKAHEAD`] ones; the
/// current segment never moves backward.
pub fn hugging_distance(traj: &Trajectory, ctraj: &CTrajectory, f: &PiecewiseFn, delta: f64) -> HugReport {
    let geoms: Vec<_> = ctraj.segments.iter().map(|s| segment_geometry(s, f)).collect();
    let mut per_segment = vec![None; geoms.len()];
    let mut overall: f64 = 0.0;
    let mut k = 0;
    if !geoms.is_empty() {
        for s in &traj.samples {
            let p = (s.x, s.y);
            let window = overall.max(0.05);
            let (j, d) = (k..(k + LOOKAHEAD + 1).min(geoms.len()))
                .map(|j| (j, distance_to(&geoms[j], p, window)))
                .fold((k, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
            k = j;
            let slot: &mut Option<f64> = &mut per_segment[j];
            *slot = Some(slot.map_or(d, |v| v.max(d)));
            overall = overall.max(d);
        }
    }

    let predicted = ctraj.exits();
    let episodes: Vec<f64> = axis_episodes(traj, f, delta)
        .iter()
        .filter_map(|e| e.jump_x)
        .collect();
    let mismatch = (episodes.len() != predicted.len()).then(|| {
        format!(
            "{} axis episodes for {} horizontal segments",
            episodes.len(),
            predicted.len()
        )
    });
    let exits = predicted
        .iter()
        .enumerate()
        .filter_map(|(i, &(_, s_rho, _))| {
            let sim = if mismatch.is_none() {
                Some(episodes[i])
            } else {
                episodes
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - s_rho).abs().total_cmp(&(b - s_rho).abs()))
            }?;
            Some(ExitMatch {
                predicted: s_rho,
                simulated: sim,
                error: (sim - s_rho).abs(),
            })
        })
        .collect();
    HugReport {
        per_segment,
        overall,
        exits,
        mismatch,
        parameterization: "monotone nearest-segment assignment",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub sup_distance: f64,
    pub max_exit_error: f64,
    pub horizontals: usize,
    pub episodes: usize,
    /// Solver failure for this row, if any.
    pub failure: Option<String>,
}

/// One simulation and comparison per `ε`, with `m = e^{ρ/ε}` and `ρ` taken
/// from `base`.
pub fn convergence_sweep(base: &Scenario, epsilons: &[f64]) -> Result<Vec<SweepRow>, AnalysisError> {
    if epsilons.iter().any(|&e| !(e > 0.0)) || epsilons.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(AnalysisError::UnsortedEpsilons);
    }
    let rho = base.rho();
    let f = &base.f;
    let x_max = base.origin.0 + base.t_max;
    let ctraj = c_trajectory(
        f,
        rho,
        base.origin,
        CTrajectoryOptions {
            x_max,
            ..Default::default()
        },
    )?;
    let rows = epsilons
        .iter()
        .map(|&eps| {
            let scn = Scenario::with_rho(f.clone(), eps, rho, base.origin, base.t_max)
                .map(|s| s.with_solver(base.solver));
            match scn.and_then(|s| simulate(&s)) {
                Ok(tr) => {
                    let delta = default_delta(eps);
                    let rep = hugging_distance(&tr, &ctraj, f, delta);
                    SweepRow {
                        epsilon: eps,
                        sup_distance: rep.overall,
                        max_exit_error: rep.max_exit_error(),
                        horizontals: ctraj.exits().len(),
                        episodes: axis_episodes(&tr, f, delta).len(),
                        failure: None,
                    }
                }
                Err(e) => SweepRow {
                    epsilon: eps,
                    sup_distance: f64::NAN,
                    max_exit_error: f64::NAN,
                    horizontals: ctraj.exits().len(),
                    episodes: 0,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("epsilon,sup_distance,max_exit_error,horizontals,episodes,status\n");
    for r in rows {
        let status = r.failure.as_deref().map_or(String::from("ok"), |m| format!("failed: {}", m.replace(',', ";")));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{status}",
            r.epsilon, r.sup_distance, r.max_exit_error, r.horizontals, r.episodes
        );
    }
    out
}
