//! Minimal SVG line plots: fixed 800×500 canvas, one or more stacked
//! panels, one polyline per series.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 30.0;
const GAP: f64 = 30.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Panel {
    pub label: String,
    pub log: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Data range of a panel after the log transform, widened when flat.
fn y_range(panel: &Panel, floor: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &panel.series {
        for &(_, y) in &s.points {
            if let Some(v) = transform(y, panel.log, floor) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + hi.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn transform(y: f64, log: bool, floor: f64) -> Option<f64> {
    if !y.is_finite() {
        return None;
    }
    if log {
        Some(y.max(floor).log10())
    } else {
        Some(y)
    }
}

/// Smallest value shown on a log axis: zeros and tiny values are clipped
/// 16 decades below the peak.
fn log_floor(panel: &Panel) -> f64 {
    let peak = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 0.0 {
        peak * 1e-16
    } else {
        1e-300
    }
}

fn fmt_tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else {
        format!("{v:.3e}")
    }
}

pub fn render(title: &str, x_label: &str, panels: &[Panel]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    let (x_lo, x_hi) = panels
        .iter()
        .flat_map(|p| p.series.iter().flat_map(|s| s.points.iter().map(|q| q.0)))
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (x_lo, x_hi) = if x_lo.is_finite() && x_hi > x_lo { (x_lo, x_hi) } else { (0.0, 1.0) };

    let count = panels.len().max(1) as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let panel_h = (HEIGHT - TOP - BOTTOM - GAP * (count - 1.0)) / count;

    for (k, panel) in panels.iter().enumerate() {
        let y0 = TOP + k as f64 * (panel_h + GAP);
        let floor = log_floor(panel);
        let (lo, hi) = y_range(panel, floor);
        let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = |y: f64| y0 + panel_h - (y - lo) / (hi - lo) * panel_h;

        let _ = writeln!(
            out,
            r##"<rect x="{LEFT}" y="{y0:.2}" width="{plot_w:.2}" height="{panel_h:.2}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            y0 + 10.0,
            fmt_tick(hi, panel.log)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            y0 + panel_h,
            fmt_tick(lo, panel.log)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" transform="rotate(-90 12 {:.2})">{}</text>"#,
            12.0,
            y0 + panel_h / 2.0,
            y0 + panel_h / 2.0,
            escape(&panel.label)
        );
        if !panel.log && lo < 0.0 && hi > 0.0 {
            let z = sy(0.0);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{z:.2}" x2="{:.2}" y2="{z:.2}" stroke="#bbb" stroke-dasharray="4 3"/>"##,
                LEFT + plot_w
            );
        }
        for (i, s) in panel.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mut pts = String::new();
            for &(x, y) in &s.points {
                if let (true, Some(v)) = (x.is_finite(), transform(y, panel.log, floor)) {
                    let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(v));
                }
            }
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                pts.trim_end()
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" fill="{color}" text-anchor="end">{}</text>"#,
                LEFT + plot_w - 6.0,
                y0 + 14.0 + 13.0 * i as f64,
                escape(&s.label)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{LEFT}" y="{:.2}">{}</text>"#,
        HEIGHT - 8.0,
        fmt_tick(x_lo, false)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
        WIDTH - RIGHT,
        HEIGHT - 8.0,
        fmt_tick(x_hi, false)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 8.0,
        escape(x_label)
    );
    out.push_str("</svg>\n");
    out
}
