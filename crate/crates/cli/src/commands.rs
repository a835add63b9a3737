use std::fmt::Write as _;
use std::fs;
use std::thread;

use slowfast_core::analysis::{
    axis_episodes, convergence_sweep, default_delta, detect_halo_events, hugging_distance, sweep_to_csv,
};
use slowfast_core::constrained::{c_trajectory, CTrajectory, CTrajectoryOptions, Segment, DEFAULT_MAX_SEGMENTS};
use slowfast_core::dynamics::{magnify, simulate, simulate_zchart, DynamicsError, Scenario, Trajectory};
use slowfast_core::fnspec::PiecewiseFn;
use slowfast_core::katriel::{
    delta, inflation_threshold, periodic_solution, predicted_threshold, reduce_rho, KatrielError, KatrielModel,
};

use crate::scenario::{ParseError, ScenarioFile};
use crate::svg::{Band, Plot, Series, PALETTE};
use crate::{CliError, RunConfig};

/// Files written by one command, relative to the output directory.
pub type Written = Vec<String>;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    file: ScenarioFile,
    written: Written,
}

impl<'a> Ctx<'a> {
    fn load(cfg: &'a RunConfig) -> Result<Ctx<'a>, CliError> {
        let src = fs::read_to_string(&cfg.scenario).map_err(|source| CliError::Io {
            path: cfg.scenario.clone(),
            source,
        })?;
        let file = ScenarioFile::parse(&src).map_err(|e| parse_error(cfg, e))?;
        fs::create_dir_all(&cfg.out).map_err(|source| CliError::Io {
            path: cfg.out.clone(),
            source,
        })?;
        Ok(Ctx {
            cfg,
            file,
            written: Vec::new(),
        })
    }

    fn p<T>(&self, r: Result<T, ParseError>) -> Result<T, CliError> {
        r.map_err(|e| parse_error(self.cfg, e))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.cfg.out.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn function(&self, key: &str) -> Result<PiecewiseFn, CliError> {
        self.p(self.file.function(key))
    }

    /// `ρ` either given directly or as `ε ln m`.
    fn rho(&self, epsilon: f64) -> Result<f64, CliError> {
        match (self.file.has("rho"), self.file.has("m")) {
            (true, false) => self.p(self.file.number("rho")),
            (false, true) => Ok(epsilon * self.p(self.file.number("m"))?.ln()),
            (true, true) => Err(CliError::Config("give either 'rho' or 'm', not both".into())),
            (false, false) => Err(CliError::Config("missing 'rho' (or 'm')".into())),
        }
    }

    fn scenario(&self) -> Result<Scenario, CliError> {
        let f = self.function("f")?;
        let eps = self.p(self.file.number("epsilon"))?;
        let origin = self.p(self.file.point("origin"))?;
        let t_max = self.t_max(&f, origin.0)?;
        let scn = if self.file.has("m") && !self.file.has("rho") {
            Scenario::with_m(f, eps, self.p(self.file.number("m"))?, origin, t_max)
        } else {
            Scenario::with_rho(f, eps, self.rho(eps)?, origin, t_max)
        };
        scn.map_err(dynamics_error)
    }

    fn t_max(&self, f: &PiecewiseFn, x0: f64) -> Result<f64, CliError> {
        if self.file.has("t_max") {
            return self.p(self.file.number("t_max"));
        }
        let end = f.end();
        if end.is_finite() {
            Ok(end - x0)
        } else {
            Err(CliError::Config("'t_max' is required for a periodic f".into()))
        }
    }

    fn delta(&self, eps: f64) -> Result<f64, CliError> {
        self.p(self.file.number_or("delta", default_delta(eps)))
    }

    fn ctrajectory(&self, f: &PiecewiseFn, rho: f64, origin: (f64, f64), x_max: f64) -> Result<CTrajectory, CliError> {
        let max_segments = self.p(self.file.number_or("max_segments", DEFAULT_MAX_SEGMENTS as f64))?;
        if !(max_segments >= 1.0) || max_segments.fract() != 0.0 {
            return Err(CliError::Config(format!("max_segments must be a positive integer, got {max_segments}")));
        }
        let opts = CTrajectoryOptions {
            max_segments: max_segments as usize,
            x_max,
        };
        // every constrained-system failure traces back to the scenario itself
        c_trajectory(f, rho, origin, opts).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn parse_error(cfg: &RunConfig, e: ParseError) -> CliError {
    if e.line == 0 {
        return CliError::Config(e.message);
    }
    CliError::Parse {
        path: cfg.scenario.display().to_string(),
        source: e,
    }
}

fn dynamics_error(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::InvalidScenario(m) => CliError::Config(m),
        other => CliError::Solver(other.to_string()),
    }
}

fn katriel_error(e: KatrielError) -> CliError {
    match e {
        KatrielError::Model(m) => CliError::Config(m),
        KatrielError::Fn(e) => CliError::Config(e.to_string()),
        KatrielError::Dynamics(e) => dynamics_error(e),
        other => CliError::Solver(other.to_string()),
    }
}

/// Points of the C-trajectory for plotting; slow segments follow `f`.
fn ctraj_points(ctraj: &CTrajectory, f: &PiecewiseFn) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for s in &ctraj.segments {
        match *s {
            Segment::Slow { x_from, x_to, .. } if x_to.is_finite() => {
                let n = (((x_to - x_from) / 0.01).ceil() as usize).clamp(1, 20_000);
                pts.push(s.start(f));
                for i in 1..n {
                    let x = x_from + (x_to - x_from) * i as f64 / n as f64;
                    pts.push((x, f.value(x)));
                }
                pts.push(s.end(f));
            }
            _ => {
                let end = s.end(f);
                pts.push(s.start(f));
                if end.0.is_finite() {
                    pts.push(end);
                }
            }
        }
    }
    pts
}

fn f_points(f: &PiecewiseFn, a: f64, b: f64) -> Vec<(f64, f64)> {
    let n = 1000;
    (0..=n)
        .map(|i| {
            let x = a + (b - a) * i as f64 / n as f64;
            let x = if i == n { x - 1e-9 * (b - a) } else { x };
            (x, f.value(x))
        })
        .collect()
}

fn trajectory_points(tr: &Trajectory) -> Vec<(f64, f64)> {
    tr.samples.iter().map(|s| (s.x, s.y)).collect()
}

/// y range that keeps `f` and the start visible without letting the
/// fast transients flatten the picture.
fn y_clip(f_pts: &[(f64, f64)], y0: f64) -> (f64, f64) {
    let lo = f_pts.iter().map(|p| p.1).fold(y0.min(0.0), f64::min);
    let hi = f_pts.iter().map(|p| p.1).fold(y0.max(0.0), f64::max);
    let pad = 0.1 * (hi - lo).max(1.0);
    (lo - pad, hi + pad)
}

fn overlay(title: String, f: &PiecewiseFn, tr: &Trajectory, ctraj: Option<&CTrajectory>, delta: f64) -> String {
    let (a, b) = (tr.samples[0].x, tr.last().x);
    let fp = f_points(f, a, b);
    let mut plot = Plot::new(title, "x", "y");
    plot.y_clip = Some(y_clip(&fp, tr.samples[0].y));
    plot.bands.push(Band { lo: -delta, hi: delta });
    plot.series.push(Series::line("f", "black", fp).dashed());
    if let Some(c) = ctraj {
        plot.series.push(Series::line("C-trajectory", PALETTE[1], ctraj_points(c, f)));
    }
    plot.series.push(Series::line("trajectory", PALETTE[0], trajectory_points(tr)));
    plot.render()
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<Written, CliError> {
    let mut ctx = Ctx::load(cfg)?;
    let scn = ctx.scenario()?;
    let delta = ctx.delta(scn.epsilon)?;
    let tr = simulate(&scn).map_err(dynamics_error)?;
    ctx.write("trajectory.csv", &tr.to_csv())?;

    let mut events = String::from("kind,t,x,delta\n");
    for e in detect_halo_events(&tr, &scn.f, delta) {
        let _ = writeln!(events, "{},{},{},{}", e.kind.label(), e.t, e.x, e.delta);
    }
    ctx.write("events.csv", &events)?;

    let mut episodes = String::from("episode,enter_x,exit_x,jump_x,sign_changes\n");
    for (i, ep) in axis_episodes(&tr, &scn.f, delta).iter().enumerate() {
        let opt = |v: Option<f64>| v.map_or(String::from("nan"), |x| x.to_string());
        let _ = writeln!(
            episodes,
            "{i},{},{},{},{}",
            ep.enter_x,
            opt(ep.exit_x),
            opt(ep.jump_x),
            ep.sign_changes
        );
    }
    ctx.write("episodes.csv", &episodes)?;

    if cfg.svg {
        let title = format!("simulation, eps = {}, rho = {:.4}", scn.epsilon, scn.rho());
        ctx.write("trajectory.svg", &overlay(title, &scn.f, &tr, None, delta))?;
    }
    Ok(ctx.written)
}

pub fn predict_cmd(cfg: &RunConfig) -> Result<Written, CliError> {
    let mut ctx = Ctx::load(cfg)?;
    let f = ctx.function("f")?;
    let origin = ctx.p(ctx.file.point("origin"))?;
    let rho = if ctx.file.has("rho") {
        ctx.p(ctx.file.number("rho"))?
    } else {
        let eps = ctx.p(ctx.file.number("epsilon"))?;
        ctx.rho(eps)?
    };
    let x_max = if ctx.file.has("t_max") || f.end().is_finite() {
        origin.0 + ctx.t_max(&f, origin.0)?
    } else {
        f64::INFINITY
    };
    let ctraj = ctx.ctrajectory(&f, rho, origin, x_max)?;
    ctx.write("ctrajectory.csv", &ctraj.to_csv(&f))?;
    if cfg.svg {
        let pts = ctraj_points(&ctraj, &f);
        let x_end = pts.iter().map(|p| p.0).filter(|x| x.is_finite()).fold(origin.0, f64::max);
        let fp = f_points(&f, origin.0, x_end.max(origin.0 + 1e-6));
        let mut plot = Plot::new(format!("C-trajectory, rho = {rho}"), "x", "y");
        plot.y_clip = Some(y_clip(&fp, origin.1));
        plot.series.push(Series::line("f", "black", fp).dashed());
        plot.series.push(Series::line("C-trajectory", PALETTE[1], pts));
        ctx.write("ctrajectory.svg", &plot.render())?;
    }
    Ok(ctx.written)
}

pub fn compare_cmd(cfg: &RunConfig) -> Result<Written, CliError> {
    let mut ctx = Ctx::load(cfg)?;
    let scn = ctx.scenario()?;
    let delta = ctx.delta(scn.epsilon)?;
    let x_max = scn.origin.0 + scn.t_max;
    let ctraj = ctx.ctrajectory(&scn.f, scn.rho(), scn.origin, x_max)?;
    let tr = simulate(&scn).map_err(dynamics_error)?;
    let rep = hugging_distance(&tr, &ctraj, &scn.f, delta);
    let mut hug = rep.to_csv(&ctraj);
    let _ = writeln!(hug, "# overall={} max_exit_error={}", rep.overall, rep.max_exit_error());
    if let Some(m) = &rep.mismatch {
        let _ = writeln!(hug, "# mismatch: {m}");
    }
    ctx.write("hug.csv", &hug)?;

    if ctx.file.has("epsilons") {
        let eps = ctx.p(ctx.file.list("epsilons"))?;
        let rows = convergence_sweep(&scn, &eps).map_err(|e| CliError::Config(e.to_string()))?;
        ctx.write("sweep.csv", &sweep_to_csv(&rows))?;
    }
    if cfg.svg {
        let title = format!("comparison, eps = {}, rho = {:.4}", scn.epsilon, scn.rho());
        ctx.write("compare.svg", &overlay(title, &scn.f, &tr, Some(&ctraj), delta))?;
    }
    Ok(ctx.written)
}

pub fn katriel_cmd(cfg: &RunConfig) -> Result<Written, CliError> {
    let mut ctx = Ctx::load(cfg)?;
    let r1 = ctx.function("r1")?;
    let r2 = ctx.function("r2")?;
    let eps = ctx.p(ctx.file.number("epsilon"))?;
    let model = KatrielModel::new(r1.clone(), r2.clone(), eps).map_err(katriel_error)?;

    let res = inflation_threshold(&model).map_err(katriel_error)?;
    let decoupled = delta(&model, 0.0).map_err(katriel_error)?;
    let mut csv = String::from("rho,mu,delta\n");
    let _ = writeln!(csv, "-inf,0,{decoupled}");
    for &(r, d) in &res.delta_curve {
        let _ = writeln!(csv, "{r},{:e},{d}", 0.5 * (r / eps).exp());
    }
    let _ = writeln!(csv, "# rho_star={} mu_star={:e}", res.rho_star, res.mu_star);
    match predicted_threshold(&model) {
        Ok(p) => {
            let _ = writeln!(csv, "# predicted_rho_star={p}");
        }
        Err(e) => {
            let _ = writeln!(csv, "# predicted_rho_star=nan ({e})");
        }
    }
    ctx.write("threshold.csv", &csv)?;

    let sol = periodic_solution(&reduce_rho(&model, res.rho_star).map_err(katriel_error)?).map_err(katriel_error)?;
    let mut period = String::from("x,y,z\n");
    for s in &sol.period.samples {
        let _ = writeln!(period, "{},{},{}", s.x, s.y, magnify(s.y, eps));
    }
    ctx.write("period.csv", &period)?;

    if ctx.file.has("epsilons") {
        let list = ctx.p(ctx.file.list("epsilons"))?;
        // rows are independent; each thread owns its model
        let rows: Vec<String> = thread::scope(|s| {
            let handles: Vec<_> = list
                .iter()
                .map(|&e| {
                    let (r1, r2) = (r1.clone(), r2.clone());
                    s.spawn(move || {
                        let row = KatrielModel::new(r1, r2, e).and_then(|m| inflation_threshold(&m));
                        match row {
                            Ok(r) => format!("{e},{},{:e},ok", r.rho_star, r.mu_star),
                            Err(err) => format!("{e},nan,nan,failed: {}", err.to_string().replace(',', ";")),
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        let mut table = String::from("epsilon,rho_star,mu_star,status\n");
        for r in rows {
            table.push_str(&r);
            table.push('\n');
        }
        ctx.write("thresholds.csv", &table)?;
    }

    if cfg.svg {
        let mut plot = Plot::new(format!("growth rate, eps = {eps}"), "rho", "Delta");
        plot.series.push(Series::line("Delta(rho)", PALETTE[0], res.delta_curve.clone()));
        let lo = res.delta_curve.iter().map(|p| p.1).fold(0.0, f64::min);
        let hi = res.delta_curve.iter().map(|p| p.1).fold(0.0, f64::max);
        plot.series.push(Series::line(
            format!("rho* = {:.4}", res.rho_star),
            PALETTE[1],
            vec![(res.rho_star, lo), (res.rho_star, hi)],
        ));
        ctx.write("delta.svg", &plot.render())?;
    }
    Ok(ctx.written)
}

pub fn magnify_cmd(cfg: &RunConfig) -> Result<Written, CliError> {
    let mut ctx = Ctx::load(cfg)?;
    let base = ctx.scenario()?;
    let ks = if ctx.file.has("y0_over_m") {
        ctx.p(ctx.file.list("y0_over_m"))?
    } else {
        vec![base.origin.1 / base.m()]
    };
    let eps = base.epsilon;
    let x0 = base.origin.0;

    let mut fan = String::from("run,t,x,y,z\n");
    let mut exits = String::from("run,y0_over_m,y0,exit_x\n");
    let mut plot = Plot::new(format!("magnified chart, eps = {eps}, rho = {:.4}", base.rho()), "x", "z");
    for (i, &k) in ks.iter().enumerate() {
        let y0 = k * base.m();
        let tr = simulate_zchart(&base.clone().with_origin((x0, y0))).map_err(dynamics_error)?;
        for s in &tr.samples {
            let _ = writeln!(fan, "{i},{},{},{},{}", s.t, s.x, s.y, s.z);
        }
        // the fast jump has started once |y| reaches half of |f|
        let exit = tr
            .samples
            .iter()
            .skip(1)
            .find(|s| s.z.abs() >= magnify(0.5 * base.f.value(s.x).abs(), eps).abs() && s.z != 0.0)
            .map_or(String::from("nan"), |s| s.x.to_string());
        let _ = writeln!(exits, "{i},{k},{y0:e},{exit}");
        plot.series.push(Series::line(
            format!("y0/m = {k}"),
            PALETTE[i % PALETTE.len()],
            tr.samples.iter().map(|s| (s.x, s.z)).collect(),
        ));
    }
    ctx.write("fan.csv", &fan)?;
    ctx.write("exits.csv", &exits)?;
    if cfg.svg {
        ctx.write("fan.svg", &plot.render())?;
    }
    Ok(ctx.written)
}
