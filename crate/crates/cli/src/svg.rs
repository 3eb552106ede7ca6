//! Scatter plots colored by the quadrant of the reference position.

use std::fmt::Write as _;

pub const QUADRANT_COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
const QUADRANT_LABELS: [&str; 4] = ["x>=0, y>=0", "x<0, y>=0", "x<0, y<0", "x>=0, y<0"];

/// Quadrant of each mean-centered reference position, numbered counterclockwise from 0.
pub fn quadrants(reference: &[[f64; 2]]) -> Vec<usize> {
    let n = reference.len().max(1) as f64;
    let mx = reference.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = reference.iter().map(|p| p[1]).sum::<f64>() / n;
    reference
        .iter()
        .map(|p| match (p[0] - mx >= 0.0, p[1] - my >= 0.0) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        })
        .collect()
}

/// One circle per point, viewBox fitted to the data plus a legend strip on the right.
/// `header` lines go into a leading comment.
pub fn scatter_svg(points: &[[f64; 2]], reference: &[[f64; 2]], title: &str, header: &[(String, String)]) -> String {
    assert_eq!(points.len(), reference.len(), "one reference position per point");
    let mut s = String::new();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let pad = 0.05 * span;
    let legend_w = 0.45 * span;
    let (vx, vy) = (x0 - pad, -(y1 + pad) - 0.08 * span);
    let (vw, vh) = (x1 - x0 + 2.0 * pad + legend_w, y1 - y0 + 2.0 * pad + 0.08 * span);
    let font = 0.035 * span;
    let r = 0.004 * span;

    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{vx:.6} {vy:.6} {vw:.6} {vh:.6}" width="720" height="{:.0}">"#, 720.0 * vh / vw);
    if !header.is_empty() {
        s.push_str("<!--\n");
        for (k, v) in header {
            let _ = writeln!(s, "{k}={}", v.replace("--", "- -"));
        }
        s.push_str("-->\n");
    }
    let _ = writeln!(s, r#"<rect x="{vx:.6}" y="{vy:.6}" width="{vw:.6}" height="{vh:.6}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.6}" y="{:.6}" font-size="{font:.6}" font-family="sans-serif">{}</text>"#, x0, vy + 1.4 * font, escape(title));
    s.push_str("<g stroke=\"none\">\n");
    for (p, q) in points.iter().zip(quadrants(reference)) {
        let _ = writeln!(s, r#"<circle cx="{:.6}" cy="{:.6}" r="{r:.6}" fill="{}"/>"#, p[0], -p[1], QUADRANT_COLORS[q]);
    }
    s.push_str("</g>\n");
    let lx = x1 + 2.0 * pad;
    for (q, (color, label)) in QUADRANT_COLORS.iter().zip(QUADRANT_LABELS).enumerate() {
        let ly = -(y1) + (q as f64 + 0.5) * 1.6 * font;
        let _ = writeln!(s, r#"<rect x="{lx:.6}" y="{:.6}" width="{font:.6}" height="{font:.6}" fill="{color}" class="legend"/>"#, ly - 0.8 * font);
        let _ = writeln!(s, r#"<text x="{:.6}" y="{ly:.6}" font-size="{:.6}" font-family="sans-serif">{label}</text>"#, lx + 1.4 * font, 0.8 * font);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
