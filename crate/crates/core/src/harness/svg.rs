//! Minimal deterministic SVG charts.

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        } else if !log {
            let pad = 0.05 * (hi - lo);
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self { lo, hi, log, px_lo, px_hi }
    }

    fn map(&self, v: f64) -> f64 {
        let v = if self.log { v.max(f64::MIN_POSITIVE).log10() } else { v };
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            (a..=b).map(|e| 10f64.powi(e)).filter(|&t| (self.lo..=self.hi).contains(&t.log10())).collect()
        } else {
            (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
        }
    }
}

fn frame(out: &mut String, title: &str, xl: &str, yl: &str, x: &Axis, y: &Axis) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    out.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        LEFT + (W - LEFT - RIGHT) / 2.0,
        esc(title)
    ));
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    out.push_str(&format!(
        "<rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        x1 - x0,
        y0 - y1
    ));
    for t in x.ticks() {
        let px = x.map(t);
        out.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/><text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            y0 + 4.0,
            y0 + 16.0,
            tick(t)
        ));
    }
    for t in y.ticks() {
        let py = y.map(t);
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" stroke=\"black\"/><text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            x0 - 4.0,
            x0 - 6.0,
            py + 4.0,
            tick(t)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        H - 12.0,
        esc(xl)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(yl)
    ));
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, l) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        out.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"4\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            y - 4.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y + 1.0,
            esc(l)
        ));
    }
}

/// One line with an optional symmetric band; points are `(x, y, half-width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, f64)>,
}

/// Line chart with shaded `y ± half-width` bands.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, log_x: bool, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let x = Axis::new(pts().map(|p| p.0), log_x, LEFT, W - RIGHT);
    let y = Axis::new(pts().flat_map(|p| [p.1 - p.2, p.1 + p.2]), false, H - BOTTOM, TOP);
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label, &x, &y);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let p: Vec<&(f64, f64, f64)> = s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        if p.is_empty() {
            continue;
        }
        let upper: Vec<String> = p.iter().map(|q| format!("{:.2},{:.2}", x.map(q.0), y.map(q.1 + q.2))).collect();
        let lower: Vec<String> = p.iter().rev().map(|q| format!("{:.2},{:.2}", x.map(q.0), y.map(q.1 - q.2))).collect();
        out.push_str(&format!(
            "<polygon points=\"{} {}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
            upper.join(" "),
            lower.join(" ")
        ));
        let line: Vec<String> = p.iter().map(|q| format!("{:.2},{:.2}", x.map(q.0), y.map(q.1))).collect();
        out.push_str(&format!("<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n", line.join(" ")));
    }
    legend(&mut out, &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterGroup {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Scatter plot with an optional fitted line `y = slope·x + intercept` and
/// optional axes through the origin.
pub fn scatter_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    groups: &[ScatterGroup],
    fit: Option<(f64, f64)>,
    origin_axes: bool,
) -> String {
    let pts = || groups.iter().flat_map(|g| g.points.iter());
    let extra = if origin_axes { vec![0.0] } else { vec![] };
    let x = Axis::new(pts().map(|p| p.0).chain(extra.clone()), false, LEFT, W - RIGHT);
    let y = Axis::new(pts().map(|p| p.1).chain(extra), false, H - BOTTOM, TOP);
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label, &x, &y);
    if origin_axes {
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.2}\" x2=\"{:.1}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n",
            LEFT,
            y.map(0.0),
            W - RIGHT,
            y.map(0.0)
        ));
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.1}\" x2=\"{:.2}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n",
            x.map(0.0),
            TOP,
            x.map(0.0),
            H - BOTTOM
        ));
    }
    if let Some((m, b)) = fit {
        let (xa, xb) = (x.lo, x.hi);
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>\n",
            x.map(xa),
            y.map(m * xa + b),
            x.map(xb),
            y.map(m * xb + b)
        ));
    }
    for (i, g) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for &(px, py) in g.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            out.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\n", x.map(px), y.map(py)));
        }
    }
    legend(&mut out, &groups.iter().map(|g| g.label.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}
