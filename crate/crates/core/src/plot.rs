//! Byte-reproducible SVG output.
//!
//! Every figure uses an 800×600 viewBox. Scalar fields are mapped to a
//! 256-step color ramp: a value is normalized to `[0, 1]` against the plotted
//! range, quantized to an index `0..=255`, and the index is mapped by linear
//! interpolation between five fixed anchors (dark blue, blue, teal, yellow,
//! white). All coordinates are printed with a fixed number of decimals.

use std::fmt::Write as _;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;

const ANCHORS: [[u8; 3]; 5] = [
    [13, 8, 135],
    [40, 100, 200],
    [33, 160, 140],
    [240, 220, 40],
    [255, 255, 255],
];

/// Color of ramp index `0..=255`.
pub fn ramp_color(index: u8) -> [u8; 3] {
    let segments = (ANCHORS.len() - 1) as u32;
    let pos = index as u32 * segments * 1000 / 255;
    let seg = (pos / 1000).min(segments - 1) as usize;
    let frac = pos - seg as u32 * 1000;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let a = ANCHORS[seg][c] as i32;
        let b = ANCHORS[seg + 1][c] as i32;
        out[c] = (a + (b - a) * frac as i32 / 1000) as u8;
    }
    out
}

/// Quantizes `value` in `[lo, hi]` to a ramp index.
pub fn quantize(value: f64, lo: f64, hi: f64) -> u8 {
    if !value.is_finite() {
        return if value > 0.0 { 255 } else { 0 };
    }
    if hi <= lo {
        return 0;
    }
    let t = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
    (t * 255.0).round() as u8
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\" width=\"800\" height=\"600\">"
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"#ffffff\"/>");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn finite_range(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values.iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn legend(s: &mut String, lo: f64, hi: f64, label: &str) {
    let _ = writeln!(s, "<g id=\"legend\">");
    for i in 0..=255u8 {
        let y = 560.0 - i as f64 * 2.0;
        let _ = writeln!(
            s,
            "<rect x=\"760.000\" y=\"{y:.3}\" width=\"20.000\" height=\"2.000\" fill=\"{}\"/>",
            hex(ramp_color(i))
        );
    }
    let _ = writeln!(s, "<text x=\"755\" y=\"52\" font-size=\"10\" text-anchor=\"end\">{hi:.3}</text>");
    let _ = writeln!(s, "<text x=\"755\" y=\"562\" font-size=\"10\" text-anchor=\"end\">{lo:.3}</text>");
    let _ = writeln!(
        s,
        "<text x=\"770\" y=\"585\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
        escape(label)
    );
    let _ = writeln!(s, "</g>");
}

/// Heatmap of a row-major `nx × ny` grid of values (row index = imaginary
/// part, bottom row first).
pub fn heatmap_svg(
    title: &str,
    values: &[f64],
    nx: usize,
    ny: usize,
    re_range: [f64; 2],
    im_range: [f64; 2],
    label: &str,
) -> String {
    assert_eq!(values.len(), nx * ny);
    let (lo, hi) = finite_range(values);
    let mut s = header(title);
    let (x0, y0, w, h) = (60.0, 40.0, 680.0, 520.0);
    let cw = w / nx as f64;
    let ch = h / ny as f64;
    let _ = writeln!(s, "<g id=\"cells\" shape-rendering=\"crispEdges\">");
    for iy in 0..ny {
        for ix in 0..nx {
            let v = values[iy * nx + ix];
            let x = x0 + ix as f64 * cw;
            let y = y0 + h - (iy + 1) as f64 * ch;
            let _ = writeln!(
                s,
                "<rect x=\"{x:.3}\" y=\"{y:.3}\" width=\"{cw:.3}\" height=\"{ch:.3}\" fill=\"{}\"/>",
                hex(ramp_color(quantize(v, lo, hi)))
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        "<text x=\"400\" y=\"590\" font-size=\"12\" text-anchor=\"middle\">Re z [{:.3}, {:.3}]</text>",
        re_range[0], re_range[1]
    );
    let _ = writeln!(
        s,
        "<text x=\"20\" y=\"300\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 20 300)\">Im z [{:.3}, {:.3}]</text>",
        im_range[0], im_range[1]
    );
    legend(&mut s, lo, hi, label);
    s.push_str("</svg>\n");
    s
}

/// Colored markers at complex positions, with an optional reference circle.
pub fn scatter_svg(
    title: &str,
    points: &[(f64, f64)],
    values: &[f64],
    reference_radius: Option<f64>,
    label: &str,
) -> String {
    assert_eq!(points.len(), values.len());
    let (lo, hi) = finite_range(values);
    let extent = points
        .iter()
        .map(|(x, y)| x.abs().max(y.abs()))
        .chain(reference_radius)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let (cx, cy) = (390.0, 300.0);
    let scale = 250.0 / extent;
    let mut s = header(title);
    let _ = writeln!(
        s,
        "<line x1=\"{:.3}\" y1=\"300.000\" x2=\"{:.3}\" y2=\"300.000\" stroke=\"#999999\"/>",
        cx - 270.0,
        cx + 270.0
    );
    let _ = writeln!(
        s,
        "<line x1=\"{cx:.3}\" y1=\"30.000\" x2=\"{cx:.3}\" y2=\"570.000\" stroke=\"#999999\"/>"
    );
    if let Some(r) = reference_radius {
        let _ = writeln!(
            s,
            "<circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"{:.3}\" fill=\"none\" stroke=\"#444444\" stroke-dasharray=\"4 3\"/>",
            r * scale
        );
    }
    let _ = writeln!(s, "<g id=\"points\">");
    for ((x, y), v) in points.iter().zip(values) {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"3.000\" fill=\"{}\"/>",
            cx + x * scale,
            cy - y * scale,
            hex(ramp_color(quantize(*v, lo, hi)))
        );
    }
    let _ = writeln!(s, "</g>");
    legend(&mut s, lo, hi, label);
    s.push_str("</svg>\n");
    s
}

/// Polyline chart of one or more series against a shared x axis.
pub fn line_svg(title: &str, x: &[f64], series: &[(&str, Vec<f64>)]) -> String {
    let (xlo, xhi) = finite_range(x);
    let all: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let (ylo, yhi) = finite_range(&all);
    let (x0, y0, w, h) = (60.0, 40.0, 700.0, 500.0);
    let sx = |v: f64| x0 + if xhi > xlo { (v - xlo) / (xhi - xlo) * w } else { 0.0 };
    let sy = |v: f64| y0 + h - if yhi > ylo { (v - ylo) / (yhi - ylo) * h } else { 0.0 };
    let mut s = header(title);
    let _ = writeln!(
        s,
        "<rect x=\"{x0:.3}\" y=\"{y0:.3}\" width=\"{w:.3}\" height=\"{h:.3}\" fill=\"none\" stroke=\"#999999\"/>"
    );
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = hex(ramp_color(quantize(k as f64, 0.0, series.len().max(2) as f64 - 0.5)));
        let pts: Vec<String> = x
            .iter()
            .zip(ys)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| format!("{:.3},{:.3}", sx(a), sy(b)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.3}\" y=\"{:.3}\" font-size=\"11\" fill=\"{color}\">{}</text>",
            x0 + 10.0,
            y0 + 15.0 + 14.0 * k as f64,
            escape(name)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"400\" y=\"580\" font-size=\"11\" text-anchor=\"middle\">[{xlo:.3}, {xhi:.3}] x [{ylo:.3e}, {yhi:.3e}]</text>"
    );
    s.push_str("</svg>\n");
    s
}
