//! Hand-written SVG: carpet pictures and a small line plot.

use std::fmt::Write;

use fraccond::lattice::side;
use fraccond::CellSet;

pub const MAX_RENDER_LEVEL: u32 = 5;

const CANVAS: f64 = 500.0;

/// Retained cells as filled squares on a white unit square, `y` up.
pub fn carpet(cells: &CellSet) -> String {
    let n = side(cells.level()) as f64;
    let h = CANVAS / n;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{CANVAS}" height="{CANVAS}" fill="white" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<g fill="black">"#).unwrap();
    for c in cells.iter() {
        let x = (c[0] - 1) as f64 * h;
        let y = CANVAS - c[1] as f64 * h;
        writeln!(s, r#"<rect x="{x}" y="{y}" width="{h}" height="{h}"/>"#).unwrap();
    }
    s.push_str("</g>\n</svg>\n");
    s
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Polylines with markers, one per series, on shared linear axes.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, w / 2.0).unwrap();
    writeln!(
        s,
        r#"<path d="M{pad} {} V{} H{}" fill="none" stroke="black"/>"#,
        pad - 10.0,
        h - pad,
        w - pad + 10.0
    )
    .unwrap();
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{xv:.3}</text>"#, sx(xv), h - pad + 18.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, pad - 6.0, sy(yv) + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, w / 2.0, h - 16.0).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        h / 2.0,
        h / 2.0
    )
    .unwrap();
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" ")).unwrap();
        for p in &path {
            let (cx, cy) = p.split_once(',').unwrap();
            writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#).unwrap();
        }
        let ly = pad + 16.0 * i as f64;
        writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{name}</text>"#, w - pad - 80.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
