//! Minimal SVG chart writer: linear axes, lines, markers, ellipses and bars.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub(crate) const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

pub(crate) fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

pub(crate) struct Chart {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    legend: Vec<(String, &'static str)>,
}

impl Chart {
    /// Axes spanning the given data ranges, padded by 5%; degenerate ranges are widened.
    pub fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut c = Chart {
            x: pad(x),
            y: pad(y),
            body: String::new(),
            legend: Vec::new(),
        };
        c.frame(title, x_label, y_label);
        c
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn frame(&mut self, title: &str, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = write!(
            self.body,
            r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y1 - y0
        );
        for k in 0..=4 {
            let xv = self.x.0 + (self.x.1 - self.x.0) * k as f64 / 4.0;
            let yv = self.y.0 + (self.y.1 - self.y.0) * k as f64 / 4.0;
            let (tx, ty) = (self.px(xv), self.py(yv));
            let _ = write!(
                self.body,
                r##"<line x1="{tx:.1}" y1="{y1}" x2="{tx:.1}" y2="{:.1}" stroke="#333"/><text x="{tx:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"##,
                y1 + 5.0,
                y1 + 18.0,
                tick(xv)
            );
            let _ = write!(
                self.body,
                r##"<line x1="{:.1}" y1="{ty:.1}" x2="{x0}" y2="{ty:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                ty + 4.0,
                tick(yv)
            );
        }
        let _ = write!(
            self.body,
            r##"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text><text transform="translate(18 {:.1}) rotate(-90)" font-size="12" text-anchor="middle">{}</text>"##,
            (x0 + x1) / 2.0,
            escape(title),
            (x0 + x1) / 2.0,
            HEIGHT - 18.0,
            escape(x_label),
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    pub fn line(&mut self, points: &[(f64, f64)], color: &'static str, dashed: bool) {
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            pts.join(" ")
        );
    }

    pub fn marker(&mut self, x: f64, y: f64, color: &'static str) {
        let _ = write!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    /// Ellipse with radii in data units.
    pub fn ellipse(&mut self, x: f64, y: f64, rx: f64, ry: f64, color: &'static str) {
        let sx = (self.px(x + rx) - self.px(x)).abs();
        let sy = (self.py(y + ry) - self.py(y)).abs();
        let _ = write!(
            self.body,
            r#"<ellipse cx="{:.2}" cy="{:.2}" rx="{sx:.2}" ry="{sy:.2}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    /// Bar from zero to `y` centred on `x` with a width in data units.
    pub fn bar(&mut self, x: f64, width: f64, y: f64, color: &'static str) {
        let (a, b) = (self.px(x - width / 2.0), self.px(x + width / 2.0));
        let (top, base) = (self.py(y.max(0.0)), self.py(y.min(0.0)));
        let _ = write!(
            self.body,
            r#"<rect x="{a:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            b - a,
            base - top
        );
    }

    pub fn label_x(&mut self, x: f64, text: &str) {
        let _ = write!(
            self.body,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            self.px(x),
            HEIGHT - BOTTOM + 32.0,
            escape(text)
        );
    }

    pub fn legend(&mut self, name: &str, color: &'static str) {
        self.legend.push((name.to_string(), color));
    }

    pub fn render(mut self) -> String {
        for (i, (name, color)) in self.legend.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            let x = WIDTH - RIGHT + 15.0;
            let _ = write!(
                self.body,
                r#"<rect x="{x}" y="{:.1}" width="12" height="12" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
                y - 10.0,
                x + 18.0,
                y,
                escape(name)
            );
        }
        format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif"><rect width="100%" height="100%" fill="white"/>{}</svg>"#,
            self.body
        ) + "\n"
    }
}

fn pad((lo, hi): (f64, f64)) -> (f64, f64) {
    let (lo, hi) = if lo.is_finite() && hi.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    if hi > lo {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    } else {
        let m = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - m, hi + m)
    }
}

/// Range of the finite values, or `(0, 1)` if there are none.
pub(crate) fn range<I: IntoIterator<Item = f64>>(values: I) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo <= hi {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
