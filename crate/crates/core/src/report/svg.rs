//! Minimal deterministic SVG writer: fixed-precision numbers, fixed
//! attribute order, no timestamps.

use std::fmt::Write as _;

pub struct Svg {
    buf: String,
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        let mut buf = String::new();
        writeln!(
            buf,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
        )
        .unwrap();
        writeln!(
            buf,
            r##"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="#ffffff"/>"##
        )
        .unwrap();
        Svg { buf }
    }

    pub fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        writeln!(
            self.buf,
            r#"<rect class="{class}" x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        )
        .unwrap();
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        writeln!(
            self.buf,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        )
        .unwrap();
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        writeln!(
            self.buf,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2"/>"#,
            pts.join(" ")
        )
        .unwrap();
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        writeln!(
            self.buf,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#
        )
        .unwrap();
    }

    /// `anchor` is `start`, `middle` or `end`; `rotate` in degrees about the anchor point.
    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, rotate: Option<f64>, body: &str) {
        let transform = rotate
            .map(|a| format!(r#" transform="rotate({a:.0} {x:.2} {y:.2})""#))
            .unwrap_or_default();
        writeln!(
            self.buf,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size:.0}" text-anchor="{anchor}"{transform}>{}</text>"#,
            escape(body)
        )
        .unwrap();
    }

    pub fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

fn hex(r: f64, g: f64, b: f64) -> String {
    let c = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(r), c(g), c(b))
}

/// Diverging blue-white-red for `v` in `[-1, 1]` (0 is white).
pub fn diverging(v: f64) -> String {
    let v = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    if v >= 0.0 {
        // white -> #b2182b
        hex(
            1.0 - v * (1.0 - 0.698),
            1.0 - v * (1.0 - 0.094),
            1.0 - v * (1.0 - 0.169),
        )
    } else {
        let a = -v;
        // white -> #2166ac
        hex(1.0 - a * (1.0 - 0.129), 1.0 - a * (1.0 - 0.4), 1.0 - a * (1.0 - 0.675))
    }
}

/// Sequential white-to-dark-green for `v` in `[0, 1]`; negatives map to a
/// light purple so they stay visible.
pub fn sequential(v: f64) -> String {
    if !v.is_finite() {
        return hex(1.0, 1.0, 1.0);
    }
    if v < 0.0 {
        let a = (-v).clamp(0.0, 1.0);
        return hex(1.0 - 0.4 * a, 1.0 - 0.6 * a, 1.0 - 0.2 * a);
    }
    let v = v.clamp(0.0, 1.0);
    hex(1.0 - v * (1.0 - 0.0), 1.0 - v * (1.0 - 0.427), 1.0 - v * (1.0 - 0.173))
}
