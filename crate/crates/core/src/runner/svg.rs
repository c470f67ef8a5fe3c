//! Minimal SVG plots: a line with a shaded band, and a progress-colored
//! scatter.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: &[f64], ys: &[f64]) -> Self {
        let span = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() || !hi.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let m = 0.05 * (hi - lo);
                (lo - m, hi + m)
            }
        };
        let (x0, x1) = span(xs);
        let (y0, y1) = span(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn header(out: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (v, anchor, x, y) in [
        (f.x0, "start", PAD, H - PAD + 14.0),
        (f.x1, "end", W - PAD, H - PAD + 14.0),
        (f.y0, "end", PAD - 4.0, H - PAD),
        (f.y1, "end", PAD - 4.0, PAD + 4.0),
    ] {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean curve with a `mean ± std` band.
pub fn line_with_band(title: &str, xlabel: &str, ylabel: &str, x: &[f64], y: &[f64], std: &[f64]) -> String {
    let lows: Vec<f64> = y.iter().zip(std).map(|(a, s)| a - s).collect();
    let highs: Vec<f64> = y.iter().zip(std).map(|(a, s)| a + s).collect();
    let f = Frame::fit(x, &[lows.clone(), highs.clone()].concat());
    let mut out = String::new();
    header(&mut out, &f, title, xlabel, ylabel);
    let mut band = String::new();
    for (xi, hi) in x.iter().zip(&highs) {
        let _ = write!(band, "{:.2},{:.2} ", f.px(*xi), f.py(*hi));
    }
    for (xi, lo) in x.iter().zip(&lows).rev() {
        let _ = write!(band, "{:.2},{:.2} ", f.px(*xi), f.py(*lo));
    }
    let _ = writeln!(out, r##"<polygon points="{}" fill="#4878d0" fill-opacity="0.25" stroke="none"/>"##, band.trim_end());
    let line: Vec<String> = x.iter().zip(y).map(|(a, b)| format!("{:.2},{:.2}", f.px(*a), f.py(*b))).collect();
    let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#4878d0" stroke-width="2"/>"##, line.join(" "));
    out.push_str("</svg>\n");
    out
}

/// Scatter whose color runs from light to dark with `t`.
pub fn progress_scatter(title: &str, xlabel: &str, ylabel: &str, t: &[f64], x: &[f64], y: &[f64]) -> String {
    let f = Frame::fit(x, y);
    let mut out = String::new();
    header(&mut out, &f, title, xlabel, ylabel);
    let (t0, t1) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    for ((ti, xi), yi) in t.iter().zip(x).zip(y) {
        let p = if t1 > t0 { (ti - t0) / (t1 - t0) } else { 1.0 };
        let shade = |lo: f64, hi: f64| (lo + p * (hi - lo)).round() as u8;
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#{:02x}{:02x}{:02x}"/>"##,
            f.px(*xi),
            f.py(*yi),
            shade(253.0, 68.0),
            shade(231.0, 1.0),
            shade(37.0, 84.0)
        );
    }
    out.push_str("</svg>\n");
    out
}
