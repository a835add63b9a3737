//! Minimal polyline plots.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 50.0;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, color: &'static str, points: Vec<(f64, f64)>) -> Series {
        Series {
            label: label.into(),
            color,
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Series {
        self.dashed = true;
        self
    }
}

/// Horizontal band `y ∈ [lo, hi]` drawn behind the series.
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
    /// Optional clip of the y range; points outside are clamped.
    pub y_clip: Option<(f64, f64)>,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: &str, y_label: &str) -> Plot {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            bands: Vec::new(),
            y_clip: None,
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if let Some((lo, hi)) = self.y_clip {
            y0 = y0.max(lo);
            y1 = y1.min(hi);
        }
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        (x0, x1, y0 - pad, y1 + pad)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y.clamp(y0, y1) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for b in &self.bands {
            let (top, bot) = (sy(b.hi), sy(b.lo));
            let _ = writeln!(
                out,
                r##"<rect x="{MARGIN}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="#dddddd" opacity="0.6"/>"##,
                WIDTH - 2.0 * MARGIN,
                (bot - top).max(0.5)
            );
        }
        // frame, and the axis line when visible
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        if y0 < 0.0 && y1 > 0.0 {
            let _ = writeln!(
                out,
                r#"<line x1="{MARGIN}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="gray" stroke-width="0.5"/>"#,
                sy(0.0),
                WIDTH - MARGIN
            );
        }
        for s in &self.series {
            let dash = if s.dashed { r#" stroke-dasharray="6,3""# } else { "" };
            // non-finite points break the polyline
            for run in s.points.split(|p| !p.0.is_finite() || !p.1.is_finite()) {
                if run.is_empty() {
                    continue;
                }
                let mut pts = String::new();
                for &(x, y) in run {
                    let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(y));
                }
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.2"{dash} points="{}"/>"#,
                    s.color,
                    pts.trim_end()
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="25" font-size="16" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{} [{}, {}]</text>"#,
            WIDTH / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label),
            fmt_tick(x0),
            fmt_tick(x1)
        );
        let _ = writeln!(
            out,
            r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">{} [{}, {}]</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label),
            fmt_tick(y0),
            fmt_tick(y1)
        );
        for (i, s) in self.series.iter().enumerate() {
            let y = MARGIN + 15.0 + 15.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{y}" font-size="11" fill="{}">{}</text>"#,
                WIDTH - MARGIN - 150.0,
                s.color,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];
