use std::fmt::Write as _;

use super::{PlotSpec, ReportError};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const SERIES_COLOR: &str = "#1f77b4";
const CLIPPED_COLOR: &str = "#ff7f0e";
const MARKER_COLOR: &str = "red";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Frame {
    n: usize,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(plot: &PlotSpec) -> Self {
        let mut y_min = plot
            .points
            .iter()
            .map(|p| p.y)
            .fold(f64::INFINITY, f64::min);
        let mut y_max = plot
            .points
            .iter()
            .map(|p| p.y)
            .fold(f64::NEG_INFINITY, f64::max);
        if let Some(c) = plot.clip_threshold {
            if plot.points.iter().any(|p| p.clipped) {
                y_max = y_max.max(c);
            }
        }
        let pad = if y_max > y_min {
            (y_max - y_min) * 0.05
        } else {
            (y_max.abs() * 0.05).max(1.0)
        };
        y_min -= pad;
        y_max += pad;
        Self {
            n: plot.points.len(),
            y_min,
            y_max,
        }
    }

    fn x(&self, i: usize) -> f64 {
        let w = WIDTH - LEFT - RIGHT;
        if self.n == 1 {
            LEFT + w / 2.0
        } else {
            LEFT + w * i as f64 / (self.n - 1) as f64
        }
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - TOP - BOTTOM;
        TOP + h * (self.y_max - v) / (self.y_max - self.y_min)
    }
}

/// Renders a standalone SVG 1.1 document: the series as a polyline, clipped
/// points as triangles and change points as red dots.
pub fn emit_svg(plot: &PlotSpec) -> Result<Vec<u8>, ReportError> {
    if plot.points.is_empty() {
        return Err(ReportError::InvalidArgument("plot has no points".into()));
    }
    if let Some(&bad) = plot
        .change_markers
        .iter()
        .find(|&&m| m >= plot.points.len())
    {
        return Err(ReportError::InvalidArgument(format!(
            "marker index {bad} out of range"
        )));
    }
    let f = Frame::new(plot);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#
    );
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(&plot.title));
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="22" font-size="14">{}</text>"#,
        escape(&plot.title)
    );

    // axes
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        s,
        r#"<path class="axes" d="M{x0:.2} {y0:.2} L{x0:.2} {y1:.2} L{x1:.2} {y1:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = f.y_min + (f.y_max - f.y_min) * k as f64 / 4.0;
        let y = f.y(v);
        let _ = writeln!(
            s,
            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end">{:.1} {}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            v,
            escape(&plot.unit)
        );
    }
    let first = &plot.points[0];
    let last = &plot.points[plot.points.len() - 1];
    let _ = writeln!(
        s,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}">{}</text>"#,
        f.x(0),
        y1 + 20.0,
        escape(&first.label)
    );
    if plot.points.len() > 1 {
        let _ = writeln!(
            s,
            r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            f.x(last.x),
            y1 + 20.0,
            escape(&last.label)
        );
    }

    if let Some(c) = plot.clip_threshold {
        let y = f.y(c);
        if (y0..=y1).contains(&y) {
            let _ = writeln!(
                s,
                r#"<line class="clip-line" x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="gray" stroke-dasharray="4 3"/>"#
            );
        }
    }

    let coords: Vec<String> = plot
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{:.2},{:.2}", f.x(i), f.y(p.y)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline class="series" fill="none" stroke="{SERIES_COLOR}" stroke-width="1.5" points="{}"/>"#,
        coords.join(" ")
    );

    for (i, p) in plot.points.iter().enumerate() {
        let (cx, cy) = (f.x(i), f.y(p.y));
        if p.clipped {
            let _ = writeln!(
                s,
                r#"<path class="clipped-point" d="M{:.2} {:.2} L{:.2} {:.2} L{:.2} {:.2} Z" fill="{CLIPPED_COLOR}"><title>{} (clipped, actual {})</title></path>"#,
                cx,
                cy - 5.0,
                cx + 4.5,
                cy + 3.0,
                cx - 4.5,
                cy + 3.0,
                escape(&p.label),
                p.original
            );
        } else {
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{cx:.2}" cy="{cy:.2}" r="2" fill="{SERIES_COLOR}"><title>{}: {}</title></circle>"#,
                escape(&p.label),
                p.original
            );
        }
    }

    for &m in &plot.change_markers {
        let p = &plot.points[m];
        let _ = writeln!(
            s,
            r#"<circle class="change-marker" cx="{:.2}" cy="{:.2}" r="5" fill="{MARKER_COLOR}"><title>change at {}</title></circle>"#,
            f.x(m),
            f.y(p.y),
            escape(&p.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s.into_bytes())
}
