//! SVG line chart of sweep results. The output depends only on the rows, so
//! a chart can be rebuilt byte for byte from `sweep.csv`.

use std::fmt::Write;

use tmdp::navenv::Channel;

use crate::experiment::{channel_name, SweepRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn colour(ch: Channel) -> &'static str {
    match ch {
        Channel::Goal => "#1b9e77",
        Channel::Avoid => "#d95f02",
        Channel::Monitor => "#7570b3",
    }
}

fn se(row: &SweepRow, ch: Channel) -> f64 {
    match ch {
        Channel::Goal => row.se_goal,
        Channel::Avoid => row.se_avoid,
        Channel::Monitor => row.se_monitor,
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    (lo, hi)
}

/// Start-cell value of each channel against the sweep value, with ±1
/// standard-error bars where the error is nonzero.
pub fn sweep_svg(rows: &[SweepRow]) -> String {
    let (x0, x1) = range(rows.iter().map(|r| r.sweep_value));
    let (y0, y1) = range(rows.iter().flat_map(|r| Channel::ALL.map(|c| (r.value(c), se(r, c)))).flat_map(|(v, e)| [v - e, v + e]));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, px(xv), b + 16.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, l - 6.0, py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">slack</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">start-cell value</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);

    for (n, ch) in [Channel::Avoid, Channel::Monitor, Channel::Goal].into_iter().enumerate() {
        let c = colour(ch);
        let pts: Vec<String> = rows.iter().map(|row| format!("{:.2},{:.2}", px(row.sweep_value), py(row.value(ch)))).collect();
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" stroke="{c}" stroke-width="2" fill="none"/>"#, pts.join(" "));
        }
        for row in rows {
            let (x, y, e) = (px(row.sweep_value), row.value(ch), se(row, ch));
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, py(y));
            if e > 0.0 {
                let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{c}"/>"#, py(y - e), py(y + e));
            }
        }
        let ly = t - 30.0 + 12.0 * n as f64;
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="2"/>"#, r - 90.0, r - 70.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, r - 64.0, ly + 4.0, channel_name(ch));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let t = format!("{v:.3}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" { "0".into() } else { t.into() }
}
