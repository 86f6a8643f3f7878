//! Minimal static SVG line and box charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#7f7f7f", "#9467bd", "#ff7f0e"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.to_string(),
            points,
        }
    }
}

/// Five-number summary of one group's values.
pub struct BoxGroup {
    pub label: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxGroup {
    /// Summarizes `values`; all fields are NaN when `values` is empty.
    pub fn new(label: &str, values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let q = |p| if v.is_empty() { f64::NAN } else { quantile(&v, p) };
        BoxGroup {
            label: label.to_string(),
            min: q(0.0),
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: q(1.0),
        }
    }
}

pub struct Chart {
    title: String,
    x_label: String,
    y_label: String,
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|k| self.lo + (self.hi - self.lo) * k as f64 / 4.0).collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: &str, y_label: &str) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
        }
    }

    fn frame(&self, out: &mut String, y: &Axis) {
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for t in y.ticks() {
            let py = self.py(t, y);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" x2="{}" y1="{py:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                WIDTH - RIGHT,
                LEFT - 6.0,
                py + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
    }

    fn px(&self, v: f64, x: &Axis) -> f64 {
        LEFT + (v - x.lo) / (x.hi - x.lo) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, v: f64, y: &Axis) -> f64 {
        HEIGHT - BOTTOM - (v - y.lo) / (y.hi - y.lo) * (HEIGHT - TOP - BOTTOM)
    }

    /// Line chart; non-finite points break the line.
    pub fn lines(&self, series: &[Series]) -> String {
        let x = Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let y = Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let mut out = String::new();
        self.frame(&mut out, &y);
        for t in x.ticks() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                self.px(t, &x),
                HEIGHT - BOTTOM + 16.0,
                tick_label(t)
            );
        }
        for (k, s) in series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            for run in s.points.split(|p| !p.0.is_finite() || !p.1.is_finite()) {
                if run.is_empty() {
                    continue;
                }
                let pts: Vec<String> = run
                    .iter()
                    .map(|&(a, b)| format!("{:.2},{:.2}", self.px(a, &x), self.py(b, &y)))
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.join(" ")
                );
            }
            let ly = TOP + 16.0 * (k as f64 + 1.0);
            let lx = WIDTH - RIGHT + 10.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }

    /// Box-and-whisker chart, one box per group, whiskers at min and max.
    pub fn boxes(&self, groups: &[BoxGroup]) -> String {
        let y = Axis::fit(groups.iter().flat_map(|g| [g.min, g.max]));
        let mut out = String::new();
        self.frame(&mut out, &y);
        let slot = (WIDTH - LEFT - RIGHT) / groups.len().max(1) as f64;
        for (k, g) in groups.iter().enumerate() {
            let cx = LEFT + slot * (k as f64 + 0.5);
            let _ = writeln!(
                out,
                r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#,
                HEIGHT - BOTTOM + 16.0,
                escape(&g.label)
            );
            if !g.median.is_finite() {
                continue;
            }
            let half = slot * 0.25;
            let color = COLORS[k % COLORS.len()];
            let (ymin, yq1, ymed, yq3, ymax) = (
                self.py(g.min, &y),
                self.py(g.q1, &y),
                self.py(g.median, &y),
                self.py(g.q3, &y),
                self.py(g.max, &y),
            );
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.2}" x2="{cx:.2}" y1="{ymin:.2}" y2="{ymax:.2}" stroke="black"/>"#
            );
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{yq3:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.35" stroke="black"/>"#,
                cx - half,
                2.0 * half,
                (yq1 - yq3).max(0.5)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" x2="{:.2}" y1="{ymed:.2}" y2="{ymed:.2}" stroke="black" stroke-width="2"/>"#,
                cx - half,
                cx + half
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
