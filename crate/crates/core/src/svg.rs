//! Minimal SVG line plots for the injection preview (no plotting
//! dependency; CSV stays the canonical output).

use std::fmt::Write as _;

pub struct PolyLine<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
    pub dashed: bool,
}

/// Render aligned polylines over a shared x-axis of sample indices.
pub fn line_plot(title: &str, lines: &[PolyLine<'_>]) -> String {
    const W: f64 = 760.0;
    const H: f64 = 380.0;
    const MARGIN: f64 = 42.0;

    let n = lines.iter().map(|l| l.values.len()).max().unwrap_or(0);
    let all: Vec<f64> = lines.iter().flat_map(|l| l.values.iter().copied()).collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo).abs() < 1e-12 {
        hi = lo + 1.0;
    }
    let x = |i: usize| MARGIN + (W - 2.0 * MARGIN) * i as f64 / (n.max(2) - 1) as f64;
    let y = |v: f64| H - MARGIN - (H - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="20" font-family="monospace" font-size="13">{}</text>"#,
        MARGIN, title
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black" stroke-width="1"/>
<line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black" stroke-width="1"/>
<text x="{m}" y="{lb}" font-family="monospace" font-size="10">{lo:.1}</text>
<text x="{m}" y="{lt}" font-family="monospace" font-size="10">{hi:.1}</text>"#,
        m = MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        lb = H - MARGIN + 14.0,
        lt = MARGIN - 6.0,
    );
    for (k, line) in lines.iter().enumerate() {
        let points: Vec<String> = line
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let dash = if line.dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{} points="{}"/>"#,
            line.color,
            dash,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="11" fill="{}">{}</text>"#,
            W - MARGIN - 120.0,
            MARGIN + 16.0 * (k + 1) as f64,
            line.color,
            line.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}
