//! Probability-vs-step line plots as standalone SVG.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 500.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// One polyline per action over `steps` (x) and probabilities in [0, 1] (y).
pub fn probability_plot(title: &str, steps: &[usize], series: &[Vec<f64>], labels: &[String]) -> String {
    let x_max = steps.last().copied().unwrap_or(1).max(1) as f64;
    let x_min = steps.first().copied().unwrap_or(0) as f64;
    let span = (x_max - x_min).max(1.0);
    let px = |s: usize| LEFT + (s as f64 - x_min) / span * (W - LEFT - RIGHT);
    let py = |p: f64| TOP + (1.0 - p.clamp(0.0, 1.0)) * (H - TOP - BOTTOM);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="500" viewBox="0 0 800 500">"#);
    let _ = writeln!(out, r#"<rect x="0" y="0" width="800" height="500" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    // axes
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, py(0.0), py(1.0));
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let p = k as f64 / 4.0;
        let y = py(p);
        let _ = writeln!(out, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{p:.2}</text>"#, x0 - 8.0, y + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{x0}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, y0 + 20.0, x_min);
    let _ = writeln!(out, r#"<text x="{x1}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#, y0 + 20.0, x_max);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">step</text>"#, (x0 + x1) / 2.0, H - 12.0);

    for (a, ys) in series.iter().enumerate() {
        let color = COLORS[a % COLORS.len()];
        let mut pts = String::new();
        for (s, p) in steps.iter().zip(ys) {
            let _ = write!(pts, "{:.2},{:.2} ", px(*s), py(*p));
        }
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.trim_end());
        let ly = TOP + 20.0 + 22.0 * a as f64;
        let _ = writeln!(out, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, x1 + 15.0, x1 + 40.0);
        let name = labels.get(a).cloned().unwrap_or_else(|| format!("y{}", a + 1));
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13">pi({})</text>"#, x1 + 46.0, ly + 4.0, escape(&name));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
