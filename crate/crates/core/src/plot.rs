//! Minimal SVG line plot of `|phi(t)|`.

use std::fmt::Write as _;

use crate::cf::EcfEstimate;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

/// Plots the modulus of `estimate` over its grid, with an optional reference
/// curve sampled on the same grid. The band `|phi| +- radius` is shaded.
pub fn modulus_svg(estimate: &EcfEstimate, reference: Option<&[f64]>, title: &str) -> String {
    let ts = estimate.grid().points();
    let (t0, t1) = (ts[0], ts[ts.len() - 1]);
    let x = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    // y axis spans [0, 1.05]
    let y = |v: f64| HEIGHT - MARGIN - v.clamp(0.0, 1.05) / 1.05 * (HEIGHT - 2.0 * MARGIN);
    let moduli: Vec<f64> = (0..ts.len()).map(|i| estimate.modulus(i)).collect();
    let r = estimate.radius();

    let polyline = |vals: &mut dyn Iterator<Item = (f64, f64)>| {
        vals.map(|(t, v)| format!("{:.2},{:.2}", x(t), y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let band_upper = polyline(&mut ts.iter().zip(&moduli).map(|(&t, &m)| (t, m + r)));
    let band_lower = polyline(
        &mut ts
            .iter()
            .zip(&moduli)
            .rev()
            .map(|(&t, &m)| (t, (m - r).max(0.0))),
    );
    let _ = writeln!(
        svg,
        r##"<polygon points="{band_upper} {band_lower}" fill="#9ecae1" fill-opacity="0.4"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##,
        polyline(&mut ts.iter().copied().zip(moduli.iter().copied()))
    );
    if let Some(reference) = reference {
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#d94801" stroke-width="1.5" stroke-dasharray="6 4"/>"##,
            polyline(&mut ts.iter().copied().zip(reference.iter().copied()))
        );
    }
    // axes and ticks
    let (xa, ya) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<line x1="{xa}" y1="{ya}" x2="{}" y2="{ya}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{xa}" y1="{ya}" x2="{xa}" y2="{MARGIN}" stroke="black"/>"#
    );
    for v in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.1}</text>"#,
            xa - 6.0,
            y(v) + 4.0
        );
    }
    for t in [t0, 0.0, t1] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{t}</text>"#,
            x(t),
            ya + 16.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
