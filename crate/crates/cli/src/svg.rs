//! Standalone SVG charts with no external assets.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, ticks: usize) {
    let (bx, by) = (f.px(f.x0), f.py(f.y0));
    let (ex, ey) = (f.px(f.x1), f.py(f.y1));
    let _ = writeln!(
        out,
        r#"<path d="M{bx:.1},{ey:.1} L{bx:.1},{by:.1} L{ex:.1},{by:.1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=ticks {
        let t = i as f64 / ticks as f64;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let (x, y) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            by + 16.0,
            trim_num(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            bx - 6.0,
            y + 4.0,
            trim_num(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (bx + ex) / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (by + ey) / 2.0,
        (by + ey) / 2.0,
        escape(y_label)
    );
}

/// One histogram bar: `[low, high)` with a count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bar {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

/// Bar chart of tile entropies with an optional vertical marker.
pub fn histogram(title: &str, bars: &[Bar], marker: Option<(f64, &str)>) -> String {
    let x0 = bars
        .iter()
        .map(|b| b.low)
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let x1 = bars.iter().map(|b| b.high).fold(0.0, f64::max).max(8.0);
    let peak = bars.iter().map(|b| b.count).max().unwrap_or(0).max(1);
    let f = Frame {
        x0,
        x1,
        y0: 0.0,
        y1: peak as f64,
    };
    let mut out = String::new();
    header(&mut out, title);
    for b in bars.iter().filter(|b| b.count > 0) {
        let (x, xe) = (f.px(b.low), f.px(b.high));
        let y = f.py(b.count as f64);
        let _ = writeln!(
            out,
            r##"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="#4878a8"/>"##,
            (xe - x).max(0.5),
            f.py(0.0) - y
        );
    }
    axes(&mut out, &f, "tile entropy (bits)", "tiles", 4);
    if let Some((value, label)) = marker {
        let x = f.px(value.clamp(x0, x1));
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#c03030" stroke-dasharray="4 3"/>"##,
            f.py(f.y1),
            f.py(0.0)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" fill="#c03030">{} = {}</text>"##,
            x + 4.0,
            f.py(f.y1) + 12.0,
            escape(label),
            trim_num(value)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Line chart of accuracy per epoch with the first peak annotated.
pub fn line_chart(title: &str, points: &[(f64, f64)]) -> String {
    let x0 = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let mut x1 = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let f = Frame {
        x0,
        x1,
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "epoch", "accuracy", 5);
    let path: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#4878a8" stroke-width="2"/>"##,
        path.join(" ")
    );
    let peak = points
        .iter()
        .copied()
        .fold(None, |best: Option<(f64, f64)>, p| match best {
            Some(b) if p.1 <= b.1 => Some(b),
            _ => Some(p),
        });
    if let Some((px, py)) = peak {
        let (x, y) = (f.px(px), f.py(py));
        let _ = writeln!(
            out,
            r##"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="#c03030"/>"##
        );
        let anchor = if x > WIDTH / 2.0 { "end" } else { "start" };
        let dx = if anchor == "end" { -6.0 } else { 6.0 };
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}" fill="#c03030">peak {} at epoch {}</text>"##,
            x + dx,
            (y - 8.0).max(TOP),
            trim_num(py),
            trim_num(px)
        );
    }
    out.push_str("</svg>\n");
    out
}
