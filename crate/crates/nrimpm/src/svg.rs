//! Minimal SVG path writer for trajectory overlays.

use std::fmt::Write;

use crate::evaluate::TrajectoryPair;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;
const COLORS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn xy(states: &[f64], n: usize, d: usize, node: usize) -> Vec<(f64, f64)> {
    states
        .chunks(n * d)
        .map(|step| (step[node * d], step[node * d + 1.min(d - 1)]))
        .collect()
}

fn polyline(out: &mut String, pts: &[(f64, f64)], map: impl Fn(f64, f64) -> (f64, f64), color: &str, dashed: bool) {
    let mut d = String::new();
    for (i, &(x, y)) in pts.iter().enumerate() {
        let (px, py) = map(x, y);
        let _ = write!(d, "{}{px:.2},{py:.2} ", if i == 0 { "M" } else { "L" });
    }
    let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
    let _ = writeln!(
        out,
        r#"  <path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
        d.trim_end()
    );
}

/// Ground truth as solid lines, prediction dashed, one colour per node.
///
/// Plots the first two features (positions for particle systems).
pub fn trajectory_svg(pair: &TrajectoryPair) -> String {
    let (n, d) = (pair.n, pair.d);
    let all: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| xy(&pair.truth, n, d, i).into_iter().chain(xy(&pair.predicted, n, d, i)))
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let map = |x: f64, y: f64| (MARGIN + (x - x0) * scale, SIZE - MARGIN - (y - y0) * scale);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"  <rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..n {
        let c = COLORS[i % COLORS.len()];
        polyline(&mut out, &xy(&pair.truth, n, d, i), map, c, false);
        polyline(&mut out, &xy(&pair.predicted, n, d, i), map, c, true);
    }
    out.push_str("</svg>\n");
    out
}
